#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "laof/checkpoint.hpp"
#include "laof/env.hpp"
#include "laof/graph.hpp"
#include "laof/image.hpp"
#include "laof/tensor.hpp"

namespace laof {

// Frozen random-projection encoder: each 8x8x3 patch is flattened, scaled to
// [0,1], and projected by one shared matrix with orthonormal rows; patch
// outputs are concatenated. The same spec encodes observations and RGB flow.
struct EncoderSpec {
    int patch = 8;
    int dims_per_patch = 16;
    Tensor proj;  // [dims_per_patch, patch*patch*3], orthonormal rows

    static EncoderSpec make(uint64_t seed, int patch = 8, int dims_per_patch = 16);
    int state_dim(int height, int width) const {
        return (height / patch) * (width / patch) * dims_per_patch;
    }
};

// Deterministic, gradient-free featurization. Throws UsageError when the
// image dimensions are not divisible by the patch size.
Tensor encode_visual(const RgbImage& image, const EncoderSpec& encoder);

enum class Variant : uint8_t {
    LAPO = 0,
    CoMo = 1,
    LAOF = 2,
    LAOFAction = 3,
    LAOMAction = 4,
    LAOFFlowFDM = 5,
    LAOFOnlyZ = 6,
    LAOFOnlyZS = 7,
    LAOFAE = 8,
};

enum class LatentMode : uint8_t { Continuous = 0, Discrete = 1 };

std::string to_string(Variant v);
std::string to_string(LatentMode m);
Variant variant_from_string(const std::string& s);      // UsageError on unknown
LatentMode latent_mode_from_string(const std::string& s);
const std::vector<Variant>& all_variants();

struct LamConfig {
    Variant variant = Variant::LAOF;
    LatentMode latent_mode = LatentMode::Continuous;
    int state_dim = 256;  // d: must equal the encoder's output for the env size
    int latent_dim = 16;  // k
    int hidden = 256;     // trunk width, 2 hidden layers everywhere
    int codebook_size = 64;
    float beta = 0.25f;  // commitment loss weight
    ControlMode control_mode = ControlMode::Discrete5;
    int num_tasks = 16;
    int task_embed_dim = 8;
    uint64_t encoder_seed = 100;
    uint64_t init_seed = 1;

    void validate() const;  // ConfigError on nonsensical dimensions
};

// The model zoo member: frozen encoder plus the trainable components the
// variant wires in. Pretrain wiring per variant:
//   LAPO          IDM + FDM
//   CoMo          IDM (difference input) + FDM
//   LAOF          IDM + FDM + flow decoder (z)
//   LAOF-Action   LAOF + action decoder in the labeled objective
//   LAOM-Action   LAPO + action decoder in the labeled objective
//   LAOF-FlowFDM  IDM + one FDM trunk with state and flow heads
//   LAOF-OnlyZ    IDM + flow decoder (z), no FDM
//   LAOF-OnlyZS   IDM + flow decoder (z, s), no FDM
//   LAOF-AE       flow encoder -> z -> flow decoder, no IDM/FDM
// An action decoder and a task-conditioned latent policy exist for every
// variant (fine-tuning and distillation need them); the table above only
// decides which components the pretraining objective touches.
struct LamModel {
    LamConfig config;
    EncoderSpec encoder;
    ParamMap params;

    bool uses_idm() const { return config.variant != Variant::LAOFAE; }
    bool uses_fdm() const;
    bool fdm_dual_head() const { return config.variant == Variant::LAOFFlowFDM; }
    bool uses_flow_decoder() const;
    bool flow_decoder_takes_state() const { return config.variant == Variant::LAOFOnlyZS; }
    bool uses_flow_encoder() const { return config.variant == Variant::LAOFAE; }
    bool pretrain_uses_action_decoder() const {
        return config.variant == Variant::LAOFAction || config.variant == Variant::LAOMAction;
    }
    int action_dim() const { return config.control_mode == ControlMode::Discrete5 ? 5 : 2; }
    // Names of the parameters belonging to one component prefix ("idm", ...).
    std::vector<std::string> component_params(const std::string& prefix) const;
};

// Initializes parameters for the variant's wiring; deterministic for the
// config. Throws ConfigError for invalid configs.
LamModel init_lam(const LamConfig& config);

// Nearest codebook row per z row: squared L2 in double precision, ties
// resolved to the lowest index. Shapes [B,k] and [C,k].
std::vector<int> nearest_codebook_rows(const Tensor& z, const Tensor& codebook);

struct QuantizeResult {
    Graph::NodeId z_q;               // straight-through: forward is the row, grad flows to z
    std::vector<int> indices;        // chosen codebook rows
    Graph::NodeId codebook_loss;     // ||sg(z) - e||^2, mean convention
    Graph::NodeId commitment_loss;   // beta * ||z - sg(e)||^2
};

// Batched graph-building forwards over one model. Bind once per training
// step: parameters become gradient leaves, batch tensors plain leaves.
class LamForward {
  public:
    explicit LamForward(LamModel& model);

    Graph& graph() { return graph_; }
    const LamModel& model() const { return *model_; }

    Graph::NodeId param(const std::string& name);  // UsageError for unknown names
    Graph::NodeId input(Tensor value);             // non-trainable leaf

    // p_IDM(z | s_t, s_next); CoMo feeds (s_t, s_next - s_t). Continuous-mode
    // latent comes back raw; call quantize_latent in discrete mode.
    Graph::NodeId idm(Graph::NodeId s_t, Graph::NodeId s_next);
    // Nearest codebook row per batch element, ties to the lowest index.
    QuantizeResult quantize_latent(Graph::NodeId z);
    // p_FDM(s_next | s_t, z). Dual-head variants also fill flow_head (dim d).
    struct FdmOut {
        Graph::NodeId state;
        std::optional<Graph::NodeId> flow_head;
    };
    FdmOut fdm(Graph::NodeId s_t, Graph::NodeId z);
    // d_flow(f | z) or d_flow(f | z, s) in the state-conditioned variant.
    Graph::NodeId flow_decode(Graph::NodeId z);
    Graph::NodeId flow_decode(Graph::NodeId z, Graph::NodeId s_t);
    Graph::NodeId flow_encode(Graph::NodeId f);  // LAOF-AE only
    // d_action(a | z): logits [B,5] in discrete mode, (dx,dy) in continuous.
    Graph::NodeId action_decode(Graph::NodeId z);
    // pi(z | s, task): concatenates a learned task embedding onto s.
    Graph::NodeId policy(Graph::NodeId s_t, const std::vector<int>& task_ids);

    // After graph().backward(loss): gradient of a parameter leaf.
    const Tensor& grad(const std::string& name);
    // True when the parameter leaf received any gradient.
    bool has_grad(const std::string& name);

  private:
    Graph::NodeId mlp(const std::string& prefix, Graph::NodeId x);
    LamModel* model_;
    Graph graph_;
    std::map<std::string, Graph::NodeId> leaves_;
};

// Initializes `${prefix}.w1/b1/w2/b2/w3/b3` for a 2-hidden-layer tanh trunk.
void init_mlp(ParamMap& params, const std::string& prefix, int in_dim, int hidden, int out_dim,
              std::mt19937_64& rng);

}  // namespace laof
