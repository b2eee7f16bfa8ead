#include "laof/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>
#include <json.hpp>

#include "laof/errors.hpp"
#include "laof/rng.hpp"

namespace laof {

namespace {

using json = nlohmann::json;

constexpr int kProbeHidden = 64;

// Fresh 1-hidden-layer probe parameters, Xavier-initialized like the model
// MLPs so probe capacity is comparable across checkpoints.
ParamMap probe_init(int in_dim, int out_dim, uint64_t seed) {
    ParamMap p;
    std::mt19937_64 rng(splitmix64(seed));
    auto xavier = [&rng](int rows, int cols) {
        const float bound = std::sqrt(6.0f / float(rows + cols));
        return Tensor::uniform({rows, cols}, rng, -bound, bound, true);
    };
    p["probe.w1"] = xavier(in_dim, kProbeHidden);
    p["probe.b1"] = Tensor::zeros({kProbeHidden}, true);
    p["probe.w2"] = xavier(kProbeHidden, out_dim);
    p["probe.b2"] = Tensor::zeros({out_dim}, true);
    return p;
}

// Leaf ids of the probe parameters inside one graph, for gradient lookup.
struct ProbeLeaves {
    std::vector<std::pair<std::string, Graph::NodeId>> ids;
};

Graph::NodeId probe_forward(Graph& g, const ParamMap& params, Graph::NodeId x,
                            ProbeLeaves* leaves = nullptr) {
    auto param = [&](const char* name) {
        Graph::NodeId id = g.leaf(params.at(name));
        if (leaves) leaves->ids.emplace_back(name, id);
        return id;
    };
    auto h = g.tanh_op(g.add(g.matmul(x, param("probe.w1")), param("probe.b1")));
    return g.add(g.matmul(h, param("probe.w2")), param("probe.b2"));
}

Tensor gather_tensor_rows(const Tensor& src, const std::vector<int64_t>& rows) {
    const int d = src.shape[1];
    Tensor out = Tensor::zeros({int(rows.size()), d});
    for (size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(src.data.begin() + rows[i] * d, d, out.data.begin() + int64_t(i) * d);
    }
    return out;
}

// Shared 3-epoch probe trainer; the loss closure sees the logits node and the
// already-gathered batch row ids.
template <typename LossFn>
ProbeDecoder probe_fit(const Tensor& latents, int64_t n, int out_dim, int epochs,
                       uint64_t seed, int batch_size, LossFn&& make_loss) {
    if (n == 0) throw UsageError("train_probe: empty input");
    if (latents.shape.empty() || latents.shape[0] != int(n)) {
        throw UsageError("train_probe: latents/labels length mismatch");
    }
    if (epochs < 0 || batch_size < 1) {
        throw UsageError("train_probe: epochs must be >= 0 and batch_size >= 1");
    }
    ProbeDecoder probe;
    probe.params = probe_init(latents.shape[1], out_dim, seed);
    Adam opt({.lr = 1e-3f});
    std::vector<int64_t> ids(static_cast<size_t>(n));
    std::iota(ids.begin(), ids.end(), int64_t(0));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (const std::vector<int64_t>& batch :
             epoch_batches(ids, batch_size, splitmix64(seed ^ 0xF17EDULL), epoch)) {
            Graph g;
            auto x = g.leaf(gather_tensor_rows(latents, batch));
            ProbeLeaves leaves;
            auto loss = make_loss(g, probe_forward(g, probe.params, x, &leaves), batch);
            if (!std::isfinite(g.value(loss).data[0])) {
                throw NumericError("train_probe: non-finite loss");
            }
            g.backward(loss);
            for (const auto& [name, id] : leaves.ids) {
                opt.step(name, probe.params.at(name), g.grad(id));
            }
            ++probe.steps_run;
        }
    }
    return probe;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

std::string cell_key(const std::string& variant, double ratio,
                     const std::optional<double>& lambda) {
    std::ostringstream os;
    os.precision(17);
    os << variant << '|' << ratio << '|';
    if (lambda) os << *lambda;
    return os.str();
}

void open_or_throw(std::ofstream& out, const std::string& path, const char* what) {
    out.open(path, std::ios::trunc);
    if (!out) throw StateError(std::string(what) + ": cannot open " + path);
}

std::string format_value(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string to_string(MetricKind k) {
    switch (k) {
        case MetricKind::Accuracy: return "accuracy";
        case MetricKind::Mse: return "mse";
    }
    throw UsageError("unknown metric kind");
}

ProbeDecoder train_probe(const Tensor& latents, const std::vector<int>& labels,
                         int num_classes, int epochs, uint64_t seed, int batch_size) {
    if (num_classes < 2) throw UsageError("train_probe: num_classes must be >= 2");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) {
            throw UsageError("train_probe: label " + std::to_string(y) + " out of range");
        }
    }
    return probe_fit(latents, int64_t(labels.size()), num_classes, epochs, seed, batch_size,
                     [&](Graph& g, Graph::NodeId logits, const std::vector<int64_t>& batch) {
                         std::vector<int> y(batch.size());
                         for (size_t i = 0; i < batch.size(); ++i) y[i] = labels[size_t(batch[i])];
                         return g.softmax_cross_entropy(logits, y);
                     });
}

ProbeDecoder train_probe_continuous(const Tensor& latents, const Tensor& targets, int epochs,
                                    uint64_t seed, int batch_size) {
    if (targets.shape.size() != 2) throw UsageError("train_probe: targets must be [n, d]");
    return probe_fit(latents, int64_t(targets.shape[0]), targets.shape[1], epochs, seed,
                     batch_size,
                     [&](Graph& g, Graph::NodeId logits, const std::vector<int64_t>& batch) {
                         return g.mse(logits, g.leaf(gather_tensor_rows(targets, batch)));
                     });
}

namespace {
Tensor probe_logits(const ProbeDecoder& probe, const Tensor& latents) {
    Graph g;
    return g.value(probe_forward(g, probe.params, g.leaf(latents)));
}
}  // namespace

std::vector<int> probe_predict(const ProbeDecoder& probe, const Tensor& latents) {
    return argmax_rows(probe_logits(probe, latents));
}

Tensor probe_predict_continuous(const ProbeDecoder& probe, const Tensor& latents) {
    return probe_logits(probe, latents);
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.shape.size() != 2 || logits.shape[0] == 0) {
        throw UsageError("argmax_rows: needs a non-empty [n, k] tensor");
    }
    std::vector<int> out(size_t(logits.shape[0]));
    for (int i = 0; i < logits.shape[0]; ++i) {
        int best = 0;
        for (int j = 1; j < logits.shape[1]; ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        out[size_t(i)] = best;
    }
    return out;
}

double eval_accuracy(const std::vector<int>& predictions, const std::vector<int>& truth) {
    if (predictions.empty() || predictions.size() != truth.size()) {
        throw UsageError("eval_accuracy: needs non-empty, equal-length inputs");
    }
    int64_t hits = 0;
    for (size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
    return double(hits) / double(truth.size());
}

double eval_mse(const Tensor& predictions, const Tensor& truth) {
    if (predictions.shape != truth.shape || predictions.shape.size() != 2 ||
        predictions.shape[0] == 0) {
        throw UsageError("eval_mse: needs matching non-empty [n, d] tensors");
    }
    double total = 0.0;
    const int d = predictions.shape[1];
    for (int i = 0; i < predictions.shape[0]; ++i) {
        for (int j = 0; j < d; ++j) {
            const double diff = double(predictions.at(i, j)) - double(truth.at(i, j));
            total += diff * diff;
        }
    }
    return total / double(predictions.shape[0]);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw UsageError("pearson: length mismatch");
    if (x.size() < 2) throw UsageError("pearson: needs at least two points");
    const double mx = mean_of(x), my = mean_of(y);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

ProbeResult run_probe(LamModel& model, const EncodedSplit& heldout, uint64_t seed,
                      const std::string& checkpoint_id) {
    if (heldout.size() == 0) throw UsageError("run_probe: empty held-out split");
    const Batch batch = heldout.all();
    const Tensor z = extract_latents(model, batch);

    ProbeResult result;
    result.seed = seed;
    result.checkpoint_id = checkpoint_id;
    result.n_samples = heldout.size();
    if (heldout.mode == ControlMode::Discrete5) {
        ProbeDecoder probe = train_probe(z, batch.actions, kNumDiscreteActions, 3, seed);
        result.kind = MetricKind::Accuracy;
        result.value = eval_accuracy(probe_predict(probe, z), batch.actions);
    } else {
        ProbeDecoder probe = train_probe_continuous(z, batch.actions_cont, 3, seed);
        result.kind = MetricKind::Mse;
        result.value = eval_mse(probe_predict_continuous(probe, z), batch.actions_cont);
    }
    return result;
}

namespace {

// Shared rollout loop; `pick` maps the current state to an action.
template <typename PickFn>
double rollout_loop(const EnvConfig& env, int episodes, int horizon, uint64_t seed,
                    PickFn&& pick) {
    env.validate();
    if (!env.goal_enabled) throw UsageError("rollout: goal must be enabled to score success");
    if (episodes < 1 || horizon < 1) {
        throw UsageError("rollout: episodes and horizon must be positive");
    }
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        EnvState state = env_reset(env, splitmix64(seed + uint64_t(ep)));
        for (int t = 0; t < horizon; ++t) {
            auto [next, reached] = env_step(state, pick(state));
            state = std::move(next);
            if (reached) {
                ++successes;
                break;
            }
        }
    }
    return double(successes) / double(episodes);
}

}  // namespace

double rollout_success(LamModel& model, const EnvConfig& env, int episodes, int horizon,
                       uint64_t seed) {
    if (env.control_mode != model.config.control_mode) {
        throw UsageError("rollout_success: env/model control modes differ");
    }
    return rollout_loop(env, episodes, horizon, seed, [&](const EnvState& state) {
        Batch b;
        b.mode = env.control_mode;
        Tensor s = encode_visual(render(state), model.encoder);
        s.shape = {1, int(s.data.size())};  // one-row batch
        b.s_t = s;
        b.s_next = s;  // unused by the policy path; keeps Batch well-formed
        b.flow = s;
        b.task_ids = {int(state.task_id)};
        const Tensor z = policy_latents(model, b);
        LamForward f(model);
        const Tensor out = f.graph().value(f.action_decode(f.input(z)));
        if (env.control_mode == ControlMode::Discrete5) {
            return ActionValue::make_discrete(argmax_rows(out)[0]);
        }
        const float bound = kContinuousActionBound;
        return ActionValue::make_continuous(std::clamp(out.at(0, 0), -bound, bound),
                                            std::clamp(out.at(0, 1), -bound, bound));
    });
}

double rollout_success_expert(const EnvConfig& env, int episodes, int horizon, uint64_t seed) {
    return rollout_loop(env, episodes, horizon, seed,
                        [](const EnvState& state) { return scripted_expert(state); });
}

double rollout_success_random(const EnvConfig& env, int episodes, int horizon, uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed ^ 0xDA7E5ULL));
    return rollout_loop(env, episodes, horizon, seed, [&rng](const EnvState& state) {
        return random_action(state.config.control_mode, rng);
    });
}

ExperimentTable aggregate_experiments(std::vector<RunRecord> rows) {
    if (rows.empty()) throw UsageError("aggregate_experiments: empty input");
    std::sort(rows.begin(), rows.end(), [](const RunRecord& a, const RunRecord& b) {
        const auto key = [](const RunRecord& r) {
            return std::make_tuple(r.variant, r.action_ratio, r.lambda.value_or(-1.0), r.seed);
        };
        return key(a) < key(b);
    });
    for (size_t i = 1; i < rows.size(); ++i) {
        const RunRecord& a = rows[i - 1];
        const RunRecord& b = rows[i];
        if (a.variant == b.variant && a.action_ratio == b.action_ratio && a.lambda == b.lambda &&
            a.seed == b.seed) {
            throw UsageError("aggregate_experiments: duplicate run for variant " + a.variant +
                             " ratio " + std::to_string(a.action_ratio) + " seed " +
                             std::to_string(a.seed));
        }
    }

    std::vector<double> lapo;
    for (const RunRecord& r : rows) {
        if (r.variant == to_string(Variant::LAPO)) lapo.push_back(r.probe_metric);
    }

    ExperimentTable table;
    std::map<std::string, std::vector<size_t>> groups;  // ordered for stable cell order
    for (size_t i = 0; i < rows.size(); ++i) {
        groups[cell_key(rows[i].variant, rows[i].action_ratio, rows[i].lambda)].push_back(i);
    }
    for (const auto& [key, members] : groups) {
        (void)key;
        CellSummary cell;
        const RunRecord& first = rows[members.front()];
        cell.variant = first.variant;
        cell.action_ratio = first.action_ratio;
        cell.lambda = first.lambda;
        cell.n_seeds = int(members.size());
        std::vector<double> values;
        values.reserve(members.size());
        for (size_t i : members) values.push_back(rows[i].probe_metric);
        cell.mean = mean_of(values);
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - cell.mean) * (v - cell.mean);
            cell.stddev = std::sqrt(ss / double(values.size() - 1));
        }
        if (!lapo.empty()) cell.impr_vs_lapo = cell.mean - mean_of(lapo);
        table.cells.push_back(std::move(cell));
    }
    table.rows = std::move(rows);
    return table;
}

void write_table_csv(const ExperimentTable& table, const std::string& path) {
    std::ofstream out;
    open_or_throw(out, path, "write_table_csv");
    out << "variant,action_ratio,seed,metric,value\n";
    for (const RunRecord& r : table.rows) {
        const std::string prefix = r.variant + "," + format_value(r.action_ratio) + "," +
                                   std::to_string(r.seed) + ",";
        out << prefix << to_string(r.metric_kind) << "," << format_value(r.probe_metric) << "\n";
        if (r.success) out << prefix << "success," << format_value(*r.success) << "\n";
        out << prefix << "wall_seconds," << format_value(r.wall_seconds) << "\n";
    }
    if (!out) throw StateError("write_table_csv: write failed for " + path);
}

void write_summary_json(const ExperimentTable& table, const std::string& path) {
    json cells = json::array();
    for (const CellSummary& c : table.cells) {
        json j{{"variant", c.variant}, {"action_ratio", c.action_ratio},
               {"n_seeds", c.n_seeds}, {"mean", c.mean},
               {"stddev", c.stddev}};
        if (c.lambda) j["lambda"] = *c.lambda;
        if (c.impr_vs_lapo) j["impr_vs_lapo"] = *c.impr_vs_lapo;
        cells.push_back(std::move(j));
    }
    std::ofstream out;
    open_or_throw(out, path, "write_summary_json");
    out << json{{"cells", cells}}.dump(2) << "\n";
    if (!out) throw StateError("write_summary_json: write failed for " + path);
}

void write_ratio_series_csv(const ExperimentTable& table, const std::string& path) {
    std::ofstream out;
    open_or_throw(out, path, "write_ratio_series_csv");
    out << "variant,action_ratio,mean,stddev\n";
    for (const CellSummary& c : table.cells) {
        if (c.lambda) continue;  // λ-sweep cells live in the lambda series
        out << c.variant << "," << format_value(c.action_ratio) << "," << format_value(c.mean)
            << "," << format_value(c.stddev) << "\n";
    }
    if (!out) throw StateError("write_ratio_series_csv: write failed for " + path);
}

void write_lambda_series_csv(const ExperimentTable& table, const std::string& path) {
    std::ofstream out;
    open_or_throw(out, path, "write_lambda_series_csv");
    out << "variant,lambda,mean,stddev\n";
    for (const CellSummary& c : table.cells) {
        if (!c.lambda) continue;
        out << c.variant << "," << format_value(*c.lambda) << "," << format_value(c.mean) << ","
            << format_value(c.stddev) << "\n";
    }
    if (!out) throw StateError("write_lambda_series_csv: write failed for " + path);
}

}  // namespace laof
