#include "laof/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "laof/errors.hpp"
#include "laof/rng.hpp"

namespace laof {

namespace {

// Row-wise Gram-Schmidt in double precision; re-draws a row on (numerically)
// linear dependence, which cannot persist with rows << cols.
Tensor orthonormal_rows(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> basis;
    basis.reserve(size_t(rows));
    while (int(basis.size()) < rows) {
        std::vector<double> v(static_cast<size_t>(cols));
        for (auto& x : v) x = gauss(rng);
        for (const auto& b : basis) {
            double dot = 0.0;
            for (int i = 0; i < cols; ++i) dot += v[size_t(i)] * b[size_t(i)];
            for (int i = 0; i < cols; ++i) v[size_t(i)] -= dot * b[size_t(i)];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;
        for (auto& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    Tensor t = Tensor::zeros({rows, cols});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) t.at(r, c) = static_cast<float>(basis[size_t(r)][size_t(c)]);
    return t;
}

}  // namespace

EncoderSpec EncoderSpec::make(uint64_t seed, int patch, int dims_per_patch) {
    if (patch < 1 || dims_per_patch < 1 || dims_per_patch > patch * patch * 3) {
        throw ConfigError("EncoderSpec: dims_per_patch must lie in [1, patch*patch*3]");
    }
    EncoderSpec e;
    e.patch = patch;
    e.dims_per_patch = dims_per_patch;
    std::mt19937_64 rng(splitmix64(seed ^ 0xE2C0DE5ULL));
    e.proj = orthonormal_rows(dims_per_patch, patch * patch * 3, rng);
    return e;
}

Tensor encode_visual(const RgbImage& image, const EncoderSpec& encoder) {
    const int P = encoder.patch;
    if (image.height % P != 0 || image.width % P != 0) {
        throw UsageError("encode_visual: image dimensions must be divisible by the patch size");
    }
    const int py = image.height / P, px = image.width / P, k = encoder.dims_per_patch;
    const int patch_len = P * P * 3;
    Tensor out = Tensor::zeros({py * px * k});
    std::vector<float> flat(static_cast<size_t>(patch_len));
    for (int ty = 0; ty < py; ++ty) {
        for (int tx = 0; tx < px; ++tx) {
            int idx = 0;
            for (int y = ty * P; y < (ty + 1) * P; ++y)
                for (int x = tx * P; x < (tx + 1) * P; ++x)
                    for (int c = 0; c < 3; ++c) flat[size_t(idx++)] = image.at(y, x, c) / 255.0f;
            float* dst = &out.data[size_t((ty * px + tx) * k)];
            for (int r = 0; r < k; ++r) {
                const float* w = &encoder.proj.at(r, 0);
                float s = 0.0f;
#pragma omp simd reduction(+ : s)
                for (int i = 0; i < patch_len; ++i) s += w[i] * flat[size_t(i)];
                dst[r] = s;
            }
        }
    }
    return out;
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::LAPO: return "lapo";
        case Variant::CoMo: return "como";
        case Variant::LAOF: return "laof";
        case Variant::LAOFAction: return "laof-action";
        case Variant::LAOMAction: return "laom-action";
        case Variant::LAOFFlowFDM: return "laof-flowfdm";
        case Variant::LAOFOnlyZ: return "laof-onlyz";
        case Variant::LAOFOnlyZS: return "laof-onlyzs";
        case Variant::LAOFAE: return "laof-ae";
    }
    return "unknown";
}

std::string to_string(LatentMode m) {
    return m == LatentMode::Continuous ? "continuous" : "discrete";
}

Variant variant_from_string(const std::string& s) {
    for (Variant v : all_variants()) {
        if (to_string(v) == s) return v;
    }
    throw UsageError("unknown variant '" + s + "'");
}

LatentMode latent_mode_from_string(const std::string& s) {
    if (s == "continuous") return LatentMode::Continuous;
    if (s == "discrete") return LatentMode::Discrete;
    throw UsageError("unknown latent mode '" + s + "'");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::LAPO,        Variant::CoMo,
                                        Variant::LAOF,        Variant::LAOFAction,
                                        Variant::LAOMAction,  Variant::LAOFFlowFDM,
                                        Variant::LAOFOnlyZ,   Variant::LAOFOnlyZS,
                                        Variant::LAOFAE};
    return v;
}

void LamConfig::validate() const {
    if (state_dim < 1 || latent_dim < 1 || hidden < 1) {
        throw ConfigError("LamConfig: dimensions must be positive");
    }
    if (codebook_size < 1) throw ConfigError("LamConfig: codebook_size must be positive");
    if (beta < 0.0f) throw ConfigError("LamConfig: beta must be non-negative");
    if (num_tasks < 1 || task_embed_dim < 1) {
        throw ConfigError("LamConfig: task conditioning dimensions must be positive");
    }
}

bool LamModel::uses_fdm() const {
    switch (config.variant) {
        case Variant::LAPO:
        case Variant::CoMo:
        case Variant::LAOF:
        case Variant::LAOFAction:
        case Variant::LAOMAction:
        case Variant::LAOFFlowFDM: return true;
        default: return false;
    }
}

bool LamModel::uses_flow_decoder() const {
    switch (config.variant) {
        case Variant::LAOF:
        case Variant::LAOFAction:
        case Variant::LAOFOnlyZ:
        case Variant::LAOFOnlyZS:
        case Variant::LAOFAE: return true;
        default: return false;
    }
}

std::vector<std::string> LamModel::component_params(const std::string& prefix) const {
    std::vector<std::string> names;
    for (const auto& [name, _] : params) {
        if (name.rfind(prefix + ".", 0) == 0) names.push_back(name);
    }
    return names;
}

void init_mlp(ParamMap& params, const std::string& prefix, int in_dim, int hidden, int out_dim,
              std::mt19937_64& rng) {
    auto xavier = [&](int fan_in, int fan_out) {
        return std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    };
    const float a1 = xavier(in_dim, hidden), a2 = xavier(hidden, hidden), a3 = xavier(hidden, out_dim);
    params[prefix + ".w1"] = Tensor::uniform({in_dim, hidden}, rng, -a1, a1);
    params[prefix + ".b1"] = Tensor::zeros({hidden});
    params[prefix + ".w2"] = Tensor::uniform({hidden, hidden}, rng, -a2, a2);
    params[prefix + ".b2"] = Tensor::zeros({hidden});
    params[prefix + ".w3"] = Tensor::uniform({hidden, out_dim}, rng, -a3, a3);
    params[prefix + ".b3"] = Tensor::zeros({out_dim});
}

LamModel init_lam(const LamConfig& config) {
    config.validate();
    LamModel m;
    m.config = config;
    m.encoder = EncoderSpec::make(config.encoder_seed);
    std::mt19937_64 rng(splitmix64(config.init_seed ^ 0x10DE15ULL));
    const int d = config.state_dim, k = config.latent_dim, h = config.hidden;

    if (m.uses_idm()) init_mlp(m.params, "idm", 2 * d, h, k, rng);
    if (m.uses_fdm()) init_mlp(m.params, "fdm", d + k, h, m.fdm_dual_head() ? 2 * d : d, rng);
    if (m.uses_flow_encoder()) init_mlp(m.params, "flow_enc", d, h, k, rng);
    if (m.uses_flow_decoder()) {
        init_mlp(m.params, "flow_dec", m.flow_decoder_takes_state() ? k + d : k, h, d, rng);
    }
    init_mlp(m.params, "action_dec", k, h, m.action_dim(), rng);
    init_mlp(m.params, "policy", d + config.task_embed_dim, h, k, rng);
    m.params["policy.task_embed"] =
        Tensor::randn({config.num_tasks, config.task_embed_dim}, rng, 0.1f);
    if (config.latent_mode == LatentMode::Discrete) {
        const float lim = 1.0f / static_cast<float>(config.codebook_size);
        m.params["quantizer.codebook"] =
            Tensor::uniform({config.codebook_size, k}, rng, -lim, lim);
    }
    return m;
}

LamForward::LamForward(LamModel& model) : model_(&model) {
    for (auto& [name, tensor] : model.params) {
        Tensor leaf = tensor;
        leaf.requires_grad = true;
        leaves_[name] = graph_.leaf(std::move(leaf));
    }
}

Graph::NodeId LamForward::param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) {
        throw UsageError("LamForward: variant '" + to_string(model_->config.variant) +
                         "' has no parameter '" + name + "'");
    }
    return it->second;
}

Graph::NodeId LamForward::input(Tensor value) {
    value.requires_grad = false;
    return graph_.leaf(std::move(value));
}

Graph::NodeId LamForward::mlp(const std::string& prefix, Graph::NodeId x) {
    auto h1 = graph_.tanh_op(graph_.add(graph_.matmul(x, param(prefix + ".w1")), param(prefix + ".b1")));
    auto h2 = graph_.tanh_op(graph_.add(graph_.matmul(h1, param(prefix + ".w2")), param(prefix + ".b2")));
    return graph_.add(graph_.matmul(h2, param(prefix + ".w3")), param(prefix + ".b3"));
}

Graph::NodeId LamForward::idm(Graph::NodeId s_t, Graph::NodeId s_next) {
    if (!model_->uses_idm()) {
        throw UsageError("idm: variant " + to_string(model_->config.variant) + " has no IDM");
    }
    const bool diff = model_->config.variant == Variant::CoMo;
    auto second = diff ? graph_.sub(s_next, s_t) : s_next;
    return mlp("idm", graph_.concat(s_t, second, 1));
}

std::vector<int> nearest_codebook_rows(const Tensor& z, const Tensor& codebook) {
    const int B = z.extent(0), k = z.extent(1), C = codebook.extent(0);
    std::vector<int> indices(size_t(B), 0);
    for (int b = 0; b < B; ++b) {
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) {
            double dist = 0.0;
            for (int j = 0; j < k; ++j) {
                const double dlt = double(z.at(b, j)) - double(codebook.at(c, j));
                dist += dlt * dlt;
            }
            if (dist < best) {  // strict: ties keep the lowest index
                best = dist;
                indices[size_t(b)] = c;
            }
        }
    }
    return indices;
}

QuantizeResult LamForward::quantize_latent(Graph::NodeId z) {
    if (model_->config.latent_mode != LatentMode::Discrete) {
        throw UsageError("quantize_latent: model is in continuous latent mode");
    }
    const std::vector<int> indices =
        nearest_codebook_rows(graph_.value(z), model_->params.at("quantizer.codebook"));
    auto rows = graph_.gather_rows(param("quantizer.codebook"), indices);
    QuantizeResult r;
    r.indices = indices;
    r.z_q = graph_.straight_through(z, rows);
    r.codebook_loss = graph_.mse(graph_.stop_grad(z), rows);
    r.commitment_loss = graph_.scale(graph_.mse(z, graph_.stop_grad(rows)), model_->config.beta);
    return r;
}

LamForward::FdmOut LamForward::fdm(Graph::NodeId s_t, Graph::NodeId z) {
    if (!model_->uses_fdm()) {
        throw UsageError("fdm: variant " + to_string(model_->config.variant) + " has no FDM");
    }
    auto out = mlp("fdm", graph_.concat(s_t, z, 1));
    FdmOut r{out, std::nullopt};
    if (model_->fdm_dual_head()) {
        const int d = model_->config.state_dim;
        r.state = graph_.slice(out, 1, 0, d);
        r.flow_head = graph_.slice(out, 1, d, d);
    }
    return r;
}

Graph::NodeId LamForward::flow_decode(Graph::NodeId z) {
    if (!model_->uses_flow_decoder()) {
        throw UsageError("flow_decode: variant " + to_string(model_->config.variant) +
                         " has no flow decoder");
    }
    if (model_->flow_decoder_takes_state()) {
        throw UsageError("flow_decode: this variant's decoder also needs the current state");
    }
    return mlp("flow_dec", z);
}

Graph::NodeId LamForward::flow_decode(Graph::NodeId z, Graph::NodeId s_t) {
    if (!model_->uses_flow_decoder()) {
        throw UsageError("flow_decode: variant " + to_string(model_->config.variant) +
                         " has no flow decoder");
    }
    if (!model_->flow_decoder_takes_state()) {
        throw UsageError("flow_decode: this variant's decoder takes the latent only");
    }
    return mlp("flow_dec", graph_.concat(z, s_t, 1));
}

Graph::NodeId LamForward::flow_encode(Graph::NodeId f) {
    if (!model_->uses_flow_encoder()) {
        throw UsageError("flow_encode: variant " + to_string(model_->config.variant) +
                         " has no flow encoder");
    }
    return mlp("flow_enc", f);
}

Graph::NodeId LamForward::action_decode(Graph::NodeId z) { return mlp("action_dec", z); }

Graph::NodeId LamForward::policy(Graph::NodeId s_t, const std::vector<int>& task_ids) {
    for (int t : task_ids) {
        if (t < 0 || t >= model_->config.num_tasks) {
            throw UsageError("policy: task_id " + std::to_string(t) + " outside the configured " +
                             std::to_string(model_->config.num_tasks) + " tasks");
        }
    }
    auto embed = graph_.gather_rows(param("policy.task_embed"), task_ids);
    return mlp("policy", graph_.concat(s_t, embed, 1));
}

const Tensor& LamForward::grad(const std::string& name) { return graph_.grad(param(name)); }

bool LamForward::has_grad(const std::string& name) {
    const Tensor& g = graph_.grad(param(name));
    for (float x : g.data) {
        if (x != 0.0f) return true;
    }
    return false;
}

}  // namespace laof
