#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "laof/adam.hpp"
#include "laof/dataset.hpp"
#include "laof/model.hpp"

namespace laof {

enum class Stage : uint8_t { Pretrain = 0, Distill = 1, Finetune = 2 };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);  // UsageError on unknown

// One stage's knobs. Negative epochs/batch_size/lr mean "use the stage
// default" (pretrain 10 epochs / 64 / 3e-4, distill 5 / 64 / 1e-3,
// finetune 3 / 32 / 1e-3); resolved() fills them in and validates.
struct StageConfig {
    Stage stage = Stage::Pretrain;
    int epochs = -1;
    int batch_size = -1;
    float lr = -1.0f;
    Variant variant = Variant::LAOF;
    LatentMode latent_mode = LatentMode::Continuous;
    double action_ratio = 0.0;  // fraction of train transitions with labels
    std::optional<double> lambda_override;
    uint64_t seed = 0;

    StageConfig resolved() const;
    void validate() const;  // ConfigError; requires defaults already resolved
};

// Raw (unweighted) loss terms from one step; absent terms were not part of
// the variant's objective. `total` is the weighted objective actually
// minimized; `grad_norm` the global L2 norm over all updated parameters.
struct LossComponents {
    float total = 0.0f;
    std::optional<float> recon;
    std::optional<float> flow;
    std::optional<float> action;
    std::optional<float> codebook;
    std::optional<float> commitment;
    float grad_norm = 0.0f;
};

struct StepRecord {
    int64_t step = 0;
    LossComponents loss;
};

struct ProbePoint {
    int epoch = 0;  // 1-based: recorded after that epoch finished
    std::string metric;
    double value = 0.0;
};

struct TrainLog {
    std::string stage;
    std::string variant;
    uint64_t seed = 0;
    std::optional<double> lambda_used;  // mixed pretraining only
    std::vector<StepRecord> steps;
    std::vector<ProbePoint> probes;
    double wall_seconds = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

// Line-delimited JSON: one meta record, then one record per step and probe.
void write_train_log(const std::string& path, const TrainLog& log);  // StateError
TrainLog read_train_log(const std::string& path);  // StateError/FormatError

// One training batch, already pushed through the frozen encoder.
struct Batch {
    Tensor s_t;           // [B, d]
    Tensor s_next;        // [B, d]
    Tensor flow;          // [B, d] encoded flow RGB
    std::vector<int> actions;  // discrete labels; empty in continuous mode
    Tensor actions_cont;       // [B, 2] in continuous mode
    std::vector<int> task_ids;
    ControlMode mode = ControlMode::Discrete5;

    int size() const { return s_t.shape.empty() ? 0 : s_t.shape[0]; }
};

// Encoded view of a fixed id set (the encoder is frozen, so encoding once per
// run is exact). Row i corresponds to ids[i].
struct EncodedSplit {
    std::vector<int64_t> ids;
    Tensor s_t, s_next, flow;  // [n, d]
    std::vector<int> actions;
    Tensor actions_cont;
    std::vector<int> task_ids;
    ControlMode mode = ControlMode::Discrete5;

    int64_t size() const { return int64_t(ids.size()); }
    Batch gather(const std::vector<int64_t>& want) const;  // UsageError on unknown id
    Batch all() const;

    std::unordered_map<int64_t, int64_t> row_of;
};

EncodedSplit encode_split(const Dataset& dataset, const EncoderSpec& encoder,
                          const std::vector<int64_t>& ids);

// M / (N + M): the fraction of labeled samples. Throws UsageError for
// negative counts or N + M == 0.
double compute_lambda(int64_t n_unlabeled, int64_t m_labeled);

// One unsupervised pretraining step: latent from IDM (flow encoder for the
// autoencoding variant), losses per the variant wiring, one optimizer step
// over every parameter the objective touches. Throws NumericError (before
// updating anything) when the loss is non-finite.
LossComponents pretrain_step(LamModel& model, Adam& opt, const Batch& batch);

// Alternating mixed step: (a) unlabeled batch minimizing
// L_recon + (1-lambda)*L_flow, then (b) labeled batch minimizing
// L_recon + lambda*L_action; each sub-step is its own optimizer update, and a
// sub-step only touches its own decoder plus the shared trunks. An empty
// unlabeled batch skips sub-step (a). Throws UsageError unless the variant
// mixes action supervision, for lambda outside [0,1], or when the labeled
// batch carries no actions.
LossComponents pretrain_step_mixed(LamModel& model, Adam& opt, const Batch& unlabeled,
                                   const Batch& labeled, double lambda);

// The mixed objective's components evaluated without any parameter update;
// same preconditions as pretrain_step_mixed.
LossComponents pretrain_mixed_components(LamModel& model, const Batch& unlabeled,
                                         const Batch& labeled, double lambda);

// Distillation: policy regresses onto the frozen latent annotator's output;
// only policy parameters move.
float distill_step(LamModel& model, Adam& opt, const Batch& batch);

// Fine-tuning: action decoder trained against labels on latents from the
// frozen policy; only decoder parameters move. Throws UsageError when the
// batch carries no actions.
float finetune_step(LamModel& model, Adam& opt, const Batch& batch);

// The variant's latent annotator with no gradients: IDM(s_t, s_next) (flow
// encoder for the autoencoding variant), quantized in discrete mode.
Tensor extract_latents(LamModel& model, const Batch& batch);

// Frozen policy forward; in discrete latent mode the output snaps to the
// nearest codebook row, matching what the action decoder saw in training.
Tensor policy_latents(LamModel& model, const Batch& batch);

struct StageResult {
    ParamMap checkpoint;
    TrainLog log;
    std::vector<ParamMap> epoch_checkpoints;  // filled when requested
};

// Runs one stage over the dataset's train split with per-epoch held-out
// evaluation recorded into the log. Pretraining starts from prior_checkpoint
// when given, fresh initialization otherwise; distill and finetune REQUIRE a
// prior checkpoint (UsageError). Non-finite training aborts with a partial
// log instead of throwing. When out_dir is non-empty, persists
// checkpoint.bin, per-epoch checkpoints, and log.jsonl there.
StageResult run_stage(const StageConfig& config, const LamConfig& model_config,
                      const Dataset& dataset, const ParamMap* prior_checkpoint = nullptr,
                      const std::string& out_dir = "",
                      bool keep_epoch_checkpoints = false);

}  // namespace laof
