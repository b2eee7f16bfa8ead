#include "laof/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <tuple>
#include <json.hpp>

#include "laof/checkpoint.hpp"
#include "laof/errors.hpp"
#include "laof/eval.hpp"
#include "laof/rng.hpp"

namespace laof {

namespace {

using json = nlohmann::json;

constexpr uint64_t kLabeledStream = 0x1ABE1EDULL;
constexpr uint64_t kProbeStream = 0x9B0BE5ULL;

struct StageDefaults {
    int epochs;
    int batch;
    float lr;
};

StageDefaults defaults_for(Stage s) {
    switch (s) {
        case Stage::Pretrain: return {10, 64, 3e-4f};
        case Stage::Distill: return {5, 64, 1e-3f};
        case Stage::Finetune: return {3, 32, 1e-3f};
    }
    throw UsageError("unknown stage");
}

float scalar(const Graph& g, Graph::NodeId id) { return g.value(id).data[0]; }

// Shared loss-graph builder for plain and mixed pretraining. The latent comes
// from the variant's annotator; flow/action terms are optional with weights,
// so one function covers both sub-step shapes.
struct BuiltLoss {
    Graph::NodeId total;
    LossComponents raw;  // raw component values, total filled by caller
};

BuiltLoss build_pretrain_loss(LamForward& f, const Batch& batch, bool include_flow,
                              float flow_weight, bool include_action, float action_weight) {
    LamModel const& m = f.model();
    Graph& g = f.graph();
    auto s_t = f.input(batch.s_t);
    auto s_next = f.input(batch.s_next);
    auto flow = f.input(batch.flow);

    Graph::NodeId z;
    if (m.uses_flow_encoder()) {
        z = f.flow_encode(flow);
    } else {
        z = f.idm(s_t, s_next);
    }

    BuiltLoss out{};
    std::optional<Graph::NodeId> total;
    auto accumulate = [&](Graph::NodeId term, float weight) {
        Graph::NodeId weighted = weight == 1.0f ? term : g.scale(term, weight);
        total = total ? g.add(*total, weighted) : weighted;
    };

    if (m.config.latent_mode == LatentMode::Discrete) {
        QuantizeResult q = f.quantize_latent(z);
        z = q.z_q;
        out.raw.codebook = scalar(g, q.codebook_loss);
        out.raw.commitment = scalar(g, q.commitment_loss);
        accumulate(q.codebook_loss, 1.0f);
        accumulate(q.commitment_loss, 1.0f);
    }

    std::optional<Graph::NodeId> fdm_flow_head;
    if (m.uses_fdm()) {
        LamForward::FdmOut fo = f.fdm(s_t, z);
        auto recon = g.mse(fo.state, s_next);
        out.raw.recon = scalar(g, recon);
        accumulate(recon, 1.0f);
        fdm_flow_head = fo.flow_head;
    }

    if (include_flow) {
        std::optional<Graph::NodeId> f_hat;
        if (m.fdm_dual_head()) {
            f_hat = fdm_flow_head;
        } else if (m.uses_flow_decoder()) {
            f_hat = m.flow_decoder_takes_state() ? f.flow_decode(z, s_t) : f.flow_decode(z);
        }
        if (f_hat) {
            auto flow_loss = g.mse(*f_hat, flow);
            out.raw.flow = scalar(g, flow_loss);
            accumulate(flow_loss, flow_weight);
        }
    }

    if (include_action) {
        Graph::NodeId action_loss;
        if (batch.mode == ControlMode::Discrete5) {
            if (int(batch.actions.size()) != batch.size()) {
                throw UsageError("pretrain_step_mixed: labeled batch carries no actions");
            }
            action_loss = g.softmax_cross_entropy(f.action_decode(z), batch.actions);
        } else {
            if (batch.actions_cont.shape.empty() || batch.actions_cont.shape[0] != batch.size()) {
                throw UsageError("pretrain_step_mixed: labeled batch carries no actions");
            }
            action_loss = g.mse(f.action_decode(z), f.input(batch.actions_cont));
        }
        out.raw.action = scalar(g, action_loss);
        accumulate(action_loss, action_weight);
    }

    if (!total) {
        throw UsageError("pretrain objective is empty for variant " + to_string(m.config.variant));
    }
    out.total = *total;
    return out;
}

// Backward + one optimizer update over every parameter the graph touched.
// Returns the summed squared gradient norm. Throws NumericError (no update)
// on a non-finite loss.
double backprop_and_step(LamModel& model, Adam& opt, LamForward& f, Graph::NodeId total,
                         const char* what) {
    const float loss = scalar(f.graph(), total);
    if (!std::isfinite(loss)) {
        throw NumericError(std::string(what) + ": non-finite loss, step aborted");
    }
    f.graph().backward(total);
    double sq = 0.0;
    for (auto& [name, tensor] : model.params) {
        if (!f.has_grad(name)) continue;
        const Tensor& g = f.grad(name);
        for (float x : g.data) sq += double(x) * x;
        opt.step(name, tensor, g);
    }
    return sq;
}

void merge_raw(LossComponents& into, const LossComponents& part) {
    auto fold = [](std::optional<float>& dst, const std::optional<float>& src) {
        if (!src) return;
        dst = dst ? *dst + *src : *src;
    };
    fold(into.recon, part.recon);
    fold(into.flow, part.flow);
    fold(into.action, part.action);
    fold(into.codebook, part.codebook);
    fold(into.commitment, part.commitment);
}

void check_mixed_preconditions(const LamModel& model, const Batch& labeled, double lambda) {
    if (!model.pretrain_uses_action_decoder()) {
        throw UsageError("pretrain_step_mixed: variant " + to_string(model.config.variant) +
                         " does not mix action supervision");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw UsageError("pretrain_step_mixed: lambda must lie in [0,1]");
    }
    if (labeled.size() == 0) {
        throw UsageError("pretrain_step_mixed: labeled batch is empty");
    }
}

// Cycles the (small) labeled id set: refills from epoch_batches with an
// advancing cycle counter so the order never repeats within a run.
struct LabeledCycler {
    const std::vector<int64_t>* ids = nullptr;
    int batch_size = 0;
    uint64_t seed = 0;
    int64_t cycle = 0;
    std::vector<std::vector<int64_t>> queue;
    size_t next_index = 0;

    std::vector<int64_t> next() {
        if (next_index >= queue.size()) {
            queue = epoch_batches(*ids, batch_size, seed, cycle++);
            next_index = 0;
        }
        return queue[next_index++];
    }
};

json components_to_json(const StepRecord& r) {
    json j{{"kind", "step"}, {"step", r.step}, {"total", r.loss.total},
           {"grad_norm", r.loss.grad_norm}};
    auto put = [&](const char* key, const std::optional<float>& v) {
        if (v) j[key] = *v;
    };
    put("recon", r.loss.recon);
    put("flow", r.loss.flow);
    put("action", r.loss.action);
    put("codebook", r.loss.codebook);
    put("commitment", r.loss.commitment);
    return j;
}

}  // namespace

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Pretrain: return "pretrain";
        case Stage::Distill: return "distill";
        case Stage::Finetune: return "finetune";
    }
    throw UsageError("unknown stage");
}

Stage stage_from_string(const std::string& s) {
    if (s == "pretrain") return Stage::Pretrain;
    if (s == "distill") return Stage::Distill;
    if (s == "finetune") return Stage::Finetune;
    throw UsageError("unknown stage: " + s);
}

StageConfig StageConfig::resolved() const {
    StageConfig c = *this;
    const StageDefaults d = defaults_for(c.stage);
    if (c.epochs < 0) c.epochs = d.epochs;
    if (c.batch_size < 0) c.batch_size = d.batch;
    if (c.lr < 0.0f) c.lr = d.lr;
    c.validate();
    return c;
}

void StageConfig::validate() const {
    if (epochs < 0) throw ConfigError("StageConfig: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("StageConfig: batch_size must be >= 1");
    if (!(lr > 0.0f) || !std::isfinite(lr)) throw ConfigError("StageConfig: lr must be positive");
    if (!(action_ratio >= 0.0 && action_ratio <= 1.0)) {
        throw ConfigError("StageConfig: action_ratio must lie in [0,1]");
    }
    if (lambda_override && !(*lambda_override >= 0.0 && *lambda_override <= 1.0)) {
        throw ConfigError("StageConfig: lambda_override must lie in [0,1]");
    }
    if (stage == Stage::Finetune && action_ratio <= 0.0) {
        throw ConfigError("StageConfig: finetune needs action_ratio > 0 (it trains on labels)");
    }
}

void write_train_log(const std::string& path, const TrainLog& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw StateError("write_train_log: cannot open " + path);
    json meta{{"kind", "meta"},          {"stage", log.stage},
              {"variant", log.variant},  {"seed", log.seed},
              {"wall_seconds", log.wall_seconds}, {"aborted", log.aborted},
              {"abort_reason", log.abort_reason}};
    if (log.lambda_used) meta["lambda"] = *log.lambda_used;
    out << meta.dump() << "\n";
    for (const StepRecord& r : log.steps) out << components_to_json(r).dump() << "\n";
    for (const ProbePoint& p : log.probes) {
        out << json{{"kind", "probe"}, {"epoch", p.epoch}, {"metric", p.metric},
                    {"value", p.value}}
                   .dump()
            << "\n";
    }
    if (!out) throw StateError("write_train_log: write failed for " + path);
}

TrainLog read_train_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StateError("read_train_log: cannot open " + path);
    TrainLog log;
    bool saw_meta = false;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw FormatError("read_train_log: malformed JSON at " + path + ":" +
                              std::to_string(line_no));
        }
        const std::string kind = j.value("kind", "");
        if (kind == "meta") {
            saw_meta = true;
            log.stage = j.at("stage").get<std::string>();
            log.variant = j.at("variant").get<std::string>();
            log.seed = j.at("seed").get<uint64_t>();
            log.wall_seconds = j.at("wall_seconds").get<double>();
            log.aborted = j.at("aborted").get<bool>();
            log.abort_reason = j.at("abort_reason").get<std::string>();
            if (j.contains("lambda")) log.lambda_used = j.at("lambda").get<double>();
        } else if (kind == "step") {
            StepRecord r;
            r.step = j.at("step").get<int64_t>();
            r.loss.total = j.at("total").get<float>();
            r.loss.grad_norm = j.at("grad_norm").get<float>();
            auto get = [&](const char* key) -> std::optional<float> {
                if (j.contains(key)) return j.at(key).get<float>();
                return std::nullopt;
            };
            r.loss.recon = get("recon");
            r.loss.flow = get("flow");
            r.loss.action = get("action");
            r.loss.codebook = get("codebook");
            r.loss.commitment = get("commitment");
            log.steps.push_back(std::move(r));
        } else if (kind == "probe") {
            log.probes.push_back({j.at("epoch").get<int>(), j.at("metric").get<std::string>(),
                                  j.at("value").get<double>()});
        } else {
            throw FormatError("read_train_log: unknown record kind at " + path + ":" +
                              std::to_string(line_no));
        }
    }
    if (!saw_meta) throw FormatError("read_train_log: missing meta record in " + path);
    return log;
}

EncodedSplit encode_split(const Dataset& dataset, const EncoderSpec& encoder,
                          const std::vector<int64_t>& ids) {
    EncodedSplit s;
    s.ids = ids;
    s.mode = dataset.manifest.env.control_mode;
    const int64_t n = int64_t(ids.size());
    if (n == 0) return s;

    const int d = encoder.state_dim(dataset.manifest.env.height, dataset.manifest.env.width);
    s.s_t = Tensor::zeros({int(n), d});
    s.s_next = Tensor::zeros({int(n), d});
    s.flow = Tensor::zeros({int(n), d});
    if (s.mode == ControlMode::Continuous2d) s.actions_cont = Tensor::zeros({int(n), 2});
    s.actions.reserve(size_t(s.mode == ControlMode::Discrete5 ? n : 0));
    s.task_ids.reserve(size_t(n));

    for (int64_t i = 0; i < n; ++i) {
        const Transition tr = dataset.get(ids[size_t(i)]);
        const Tensor a = encode_visual(tr.obs, encoder);
        const Tensor b = encode_visual(tr.next_obs, encoder);
        const Tensor f = encode_visual(tr.flow_rgb, encoder);
        std::copy(a.data.begin(), a.data.end(), s.s_t.data.begin() + i * d);
        std::copy(b.data.begin(), b.data.end(), s.s_next.data.begin() + i * d);
        std::copy(f.data.begin(), f.data.end(), s.flow.data.begin() + i * d);
        if (s.mode == ControlMode::Discrete5) {
            s.actions.push_back(tr.action.discrete);
        } else {
            s.actions_cont.at(int(i), 0) = tr.action.dx;
            s.actions_cont.at(int(i), 1) = tr.action.dy;
        }
        s.task_ids.push_back(tr.task_id);
        s.row_of.emplace(ids[size_t(i)], i);
    }
    return s;
}

Batch EncodedSplit::gather(const std::vector<int64_t>& want) const {
    Batch b;
    b.mode = mode;
    const int n = int(want.size());
    const int d = s_t.shape.empty() ? 0 : s_t.shape[1];
    b.s_t = Tensor::zeros({n, d});
    b.s_next = Tensor::zeros({n, d});
    b.flow = Tensor::zeros({n, d});
    if (mode == ControlMode::Continuous2d) b.actions_cont = Tensor::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
        auto it = row_of.find(want[size_t(i)]);
        if (it == row_of.end()) {
            throw UsageError("EncodedSplit::gather: id " + std::to_string(want[size_t(i)]) +
                             " is not in this split");
        }
        const int64_t r = it->second;
        std::copy_n(s_t.data.begin() + r * d, d, b.s_t.data.begin() + int64_t(i) * d);
        std::copy_n(s_next.data.begin() + r * d, d, b.s_next.data.begin() + int64_t(i) * d);
        std::copy_n(flow.data.begin() + r * d, d, b.flow.data.begin() + int64_t(i) * d);
        if (mode == ControlMode::Discrete5) {
            b.actions.push_back(actions[size_t(r)]);
        } else {
            b.actions_cont.at(i, 0) = actions_cont.at(int(r), 0);
            b.actions_cont.at(i, 1) = actions_cont.at(int(r), 1);
        }
        b.task_ids.push_back(task_ids[size_t(r)]);
    }
    return b;
}

Batch EncodedSplit::all() const { return gather(ids); }

double compute_lambda(int64_t n_unlabeled, int64_t m_labeled) {
    if (n_unlabeled < 0 || m_labeled < 0 || n_unlabeled + m_labeled == 0) {
        throw UsageError("compute_lambda: needs non-negative counts with N + M > 0");
    }
    return double(m_labeled) / double(n_unlabeled + m_labeled);
}

LossComponents pretrain_step(LamModel& model, Adam& opt, const Batch& batch) {
    LamForward f(model);
    BuiltLoss built = build_pretrain_loss(f, batch, /*include_flow=*/true, 1.0f,
                                          /*include_action=*/false, 0.0f);
    LossComponents comps = built.raw;
    comps.total = scalar(f.graph(), built.total);
    const double sq = backprop_and_step(model, opt, f, built.total, "pretrain_step");
    comps.grad_norm = float(std::sqrt(sq));
    return comps;
}

LossComponents pretrain_step_mixed(LamModel& model, Adam& opt, const Batch& unlabeled,
                                   const Batch& labeled, double lambda) {
    check_mixed_preconditions(model, labeled, lambda);
    LossComponents comps;
    double total = 0.0, sq = 0.0;
    if (unlabeled.size() > 0) {
        LamForward fa(model);
        BuiltLoss a = build_pretrain_loss(fa, unlabeled, /*include_flow=*/true,
                                          float(1.0 - lambda), /*include_action=*/false, 0.0f);
        total += scalar(fa.graph(), a.total);
        sq += backprop_and_step(model, opt, fa, a.total, "pretrain_step_mixed");
        merge_raw(comps, a.raw);
    }
    LamForward fb(model);
    BuiltLoss b = build_pretrain_loss(fb, labeled, /*include_flow=*/false, 0.0f,
                                      /*include_action=*/true, float(lambda));
    total += scalar(fb.graph(), b.total);
    sq += backprop_and_step(model, opt, fb, b.total, "pretrain_step_mixed");
    merge_raw(comps, b.raw);
    comps.total = float(total);
    comps.grad_norm = float(std::sqrt(sq));
    return comps;
}

LossComponents pretrain_mixed_components(LamModel& model, const Batch& unlabeled,
                                         const Batch& labeled, double lambda) {
    check_mixed_preconditions(model, labeled, lambda);
    LossComponents comps;
    double total = 0.0;
    if (unlabeled.size() > 0) {
        LamForward fa(model);
        BuiltLoss a = build_pretrain_loss(fa, unlabeled, true, float(1.0 - lambda), false, 0.0f);
        total += scalar(fa.graph(), a.total);
        merge_raw(comps, a.raw);
    }
    LamForward fb(model);
    BuiltLoss b = build_pretrain_loss(fb, labeled, false, 0.0f, true, float(lambda));
    total += scalar(fb.graph(), b.total);
    merge_raw(comps, b.raw);
    comps.total = float(total);
    return comps;
}

Tensor extract_latents(LamModel& model, const Batch& batch) {
    LamForward f(model);
    Graph::NodeId z;
    if (model.uses_flow_encoder()) {
        z = f.flow_encode(f.input(batch.flow));
    } else {
        z = f.idm(f.input(batch.s_t), f.input(batch.s_next));
    }
    if (model.config.latent_mode == LatentMode::Discrete) {
        z = f.quantize_latent(z).z_q;
    }
    Tensor out = f.graph().value(z);
    out.requires_grad = false;
    return out;
}

Tensor policy_latents(LamModel& model, const Batch& batch) {
    LamForward f(model);
    auto zhat = f.policy(f.input(batch.s_t), batch.task_ids);
    Tensor out = f.graph().value(zhat);
    out.requires_grad = false;
    if (model.config.latent_mode == LatentMode::Discrete) {
        const Tensor& cb = model.params.at("quantizer.codebook");
        const std::vector<int> rows = nearest_codebook_rows(out, cb);
        const int k = out.shape[1];
        for (int i = 0; i < out.shape[0]; ++i) {
            for (int j = 0; j < k; ++j) out.at(i, j) = cb.at(rows[size_t(i)], j);
        }
    }
    return out;
}

float distill_step(LamModel& model, Adam& opt, const Batch& batch) {
    const Tensor z = extract_latents(model, batch);
    LamForward f(model);
    auto loss = f.graph().mse(f.policy(f.input(batch.s_t), batch.task_ids), f.input(z));
    const float value = scalar(f.graph(), loss);
    backprop_and_step(model, opt, f, loss, "distill_step");
    return value;
}

float finetune_step(LamModel& model, Adam& opt, const Batch& batch) {
    const bool labeled = batch.mode == ControlMode::Discrete5
                             ? int(batch.actions.size()) == batch.size() && batch.size() > 0
                             : !batch.actions_cont.shape.empty() &&
                                   batch.actions_cont.shape[0] == batch.size() && batch.size() > 0;
    if (!labeled) throw UsageError("finetune_step: batch carries no action labels");
    const Tensor zhat = policy_latents(model, batch);
    LamForward f(model);
    auto logits = f.action_decode(f.input(zhat));
    Graph::NodeId loss;
    if (batch.mode == ControlMode::Discrete5) {
        loss = f.graph().softmax_cross_entropy(logits, batch.actions);
    } else {
        loss = f.graph().mse(logits, f.input(batch.actions_cont));
    }
    const float value = scalar(f.graph(), loss);
    backprop_and_step(model, opt, f, loss, "finetune_step");
    return value;
}

StageResult run_stage(const StageConfig& config, const LamConfig& model_config,
                      const Dataset& dataset, const ParamMap* prior_checkpoint,
                      const std::string& out_dir, bool keep_epoch_checkpoints) {
    const StageConfig cfg = config.resolved();
    LamConfig mcfg = model_config;
    mcfg.variant = cfg.variant;
    mcfg.latent_mode = cfg.latent_mode;
    mcfg.init_seed = cfg.seed;

    const EnvConfig& env = dataset.manifest.env;
    LamModel model = init_lam(mcfg);
    if (model.encoder.state_dim(env.height, env.width) != mcfg.state_dim) {
        throw ConfigError("run_stage: state_dim " + std::to_string(mcfg.state_dim) +
                          " does not match the dataset's " + std::to_string(env.height) + "x" +
                          std::to_string(env.width) + " observations");
    }
    if (prior_checkpoint) {
        if (prior_checkpoint->size() != model.params.size()) {
            throw UsageError("run_stage: prior checkpoint does not match the model wiring");
        }
        for (const auto& [name, tensor] : *prior_checkpoint) {
            auto it = model.params.find(name);
            if (it == model.params.end() || it->second.shape != tensor.shape) {
                throw UsageError("run_stage: prior checkpoint does not match the model wiring (" +
                                 name + ")");
            }
        }
        model.params = *prior_checkpoint;
    } else if (cfg.stage != Stage::Pretrain) {
        throw UsageError("run_stage: " + to_string(cfg.stage) + " requires a prior checkpoint");
    }

    StageResult result;
    TrainLog& log = result.log;
    log.stage = to_string(cfg.stage);
    log.variant = to_string(cfg.variant);
    log.seed = cfg.seed;
    const auto t0 = std::chrono::steady_clock::now();

    const std::vector<int64_t> train_ids = dataset.split_ids(true);
    const std::vector<int64_t> test_ids = dataset.split_ids(false);
    if (train_ids.empty()) throw UsageError("run_stage: dataset has no train transitions");
    const EncodedSplit train_enc = encode_split(dataset, model.encoder, train_ids);
    const EncodedSplit test_enc = encode_split(dataset, model.encoder, test_ids);

    // Label plumbing: mixed pretraining splits train ids into
    // labeled/unlabeled; fine-tuning trains on the labeled subset only.
    std::vector<int64_t> labeled_ids, unlabeled_ids;
    bool mixed = false;
    double lambda = 0.0;
    if (cfg.stage == Stage::Pretrain && model.pretrain_uses_action_decoder() &&
        cfg.action_ratio > 0.0) {
        std::tie(labeled_ids, unlabeled_ids) =
            split_action_ratio(dataset, cfg.action_ratio, cfg.seed);
        mixed = !labeled_ids.empty();
    }
    if (mixed) {
        if (cfg.lambda_override) {
            lambda = *cfg.lambda_override;
        } else if (cfg.variant == Variant::LAOMAction) {
            lambda = 1.0;  // full-strength action supervision by default
        } else {
            lambda = compute_lambda(int64_t(unlabeled_ids.size()), int64_t(labeled_ids.size()));
        }
        log.lambda_used = lambda;
    }
    std::vector<int64_t> finetune_ids;
    if (cfg.stage == Stage::Finetune) {
        finetune_ids = split_action_ratio(dataset, cfg.action_ratio, cfg.seed).first;
        if (finetune_ids.empty()) throw UsageError("run_stage: finetune label split is empty");
    }

    Adam opt({.lr = cfg.lr});
    LabeledCycler cycler;
    cycler.ids = &labeled_ids;
    cycler.batch_size = cfg.batch_size;
    cycler.seed = splitmix64(cfg.seed ^ kLabeledStream);

    auto heldout_point = [&](int epoch) {
        if (test_enc.size() == 0) return;
        const uint64_t probe_seed = splitmix64(cfg.seed ^ kProbeStream) + uint64_t(epoch);
        switch (cfg.stage) {
            case Stage::Pretrain: {
                ProbeResult pr =
                    run_probe(model, test_enc, probe_seed, "epoch-" + std::to_string(epoch));
                log.probes.push_back({epoch,
                                      pr.kind == MetricKind::Accuracy ? "probe_accuracy"
                                                                      : "probe_mse",
                                      pr.value});
                break;
            }
            case Stage::Distill: {
                Batch tb = test_enc.all();
                log.probes.push_back(
                    {epoch, "distill_mse",
                     eval_mse(policy_latents(model, tb), extract_latents(model, tb))});
                break;
            }
            case Stage::Finetune: {
                Batch tb = test_enc.all();
                const Tensor zhat = policy_latents(model, tb);
                LamForward f(model);
                const Tensor out = f.graph().value(f.action_decode(f.input(zhat)));
                if (tb.mode == ControlMode::Discrete5) {
                    log.probes.push_back({epoch, "action_accuracy",
                                          eval_accuracy(argmax_rows(out), tb.actions)});
                } else {
                    log.probes.push_back({epoch, "action_mse", eval_mse(out, tb.actions_cont)});
                }
                break;
            }
        }
    };

    int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs && !log.aborted; ++epoch) {
        const std::vector<int64_t>& epoch_ids = cfg.stage == Stage::Finetune ? finetune_ids
                                                : mixed                      ? unlabeled_ids
                                                                             : train_ids;
        // With every train transition labeled, the labeled set drives the
        // epoch and sub-step (a) is skipped per batch.
        const bool labeled_driven = mixed && epoch_ids.empty();
        const std::vector<std::vector<int64_t>> batches = epoch_batches(
            labeled_driven ? labeled_ids : epoch_ids, cfg.batch_size, cfg.seed, epoch);
        for (const std::vector<int64_t>& batch_ids : batches) {
            try {
                StepRecord rec;
                rec.step = global_step;
                switch (cfg.stage) {
                    case Stage::Pretrain:
                        if (mixed) {
                            const Batch unl =
                                labeled_driven ? Batch{} : train_enc.gather(batch_ids);
                            const Batch lab = train_enc.gather(
                                labeled_driven ? batch_ids : cycler.next());
                            rec.loss = pretrain_step_mixed(model, opt, unl, lab, lambda);
                        } else {
                            rec.loss = pretrain_step(model, opt, train_enc.gather(batch_ids));
                        }
                        break;
                    case Stage::Distill:
                        rec.loss.total = distill_step(model, opt, train_enc.gather(batch_ids));
                        break;
                    case Stage::Finetune:
                        rec.loss.total = finetune_step(model, opt, train_enc.gather(batch_ids));
                        break;
                }
                log.steps.push_back(rec);
                ++global_step;
            } catch (const NumericError& e) {
                log.aborted = true;
                log.abort_reason = e.what();
                break;
            }
        }
        if (log.aborted) break;
        heldout_point(epoch + 1);
        if (keep_epoch_checkpoints) result.epoch_checkpoints.push_back(model.params);
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            save_checkpoint(out_dir + "/checkpoint_epoch_" + std::to_string(epoch + 1) + ".bin",
                            model.params);
        }
    }

    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.checkpoint = model.params;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        save_checkpoint(out_dir + "/checkpoint.bin", model.params);
        write_train_log(out_dir + "/log.jsonl", log);
    }
    return result;
}

}  // namespace laof
