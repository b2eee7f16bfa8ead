#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "laof/env.hpp"
#include "laof/model.hpp"
#include "laof/train.hpp"

namespace laof {

enum class MetricKind : uint8_t { Accuracy = 0, Mse = 1 };
std::string to_string(MetricKind k);

struct ProbeResult {
    MetricKind kind = MetricKind::Accuracy;
    double value = 0.0;
    int64_t n_samples = 0;
    uint64_t seed = 0;
    std::string checkpoint_id;
};

// A trained probe decoder (1 hidden layer x 64 units) plus the number of
// optimizer steps it ran, which is exactly epochs * ceil(n / batch_size).
struct ProbeDecoder {
    ParamMap params;
    int64_t steps_run = 0;
};

// Trains a fresh classification probe on (latents, labels) for exactly
// `epochs` epochs; deterministic per seed. Throws UsageError for empty or
// mismatched inputs.
ProbeDecoder train_probe(const Tensor& latents, const std::vector<int>& labels,
                         int num_classes, int epochs = 3, uint64_t seed = 0,
                         int batch_size = 32);
// Regression form for continuous actions.
ProbeDecoder train_probe_continuous(const Tensor& latents, const Tensor& targets,
                                    int epochs = 3, uint64_t seed = 0, int batch_size = 32);

std::vector<int> probe_predict(const ProbeDecoder& probe, const Tensor& latents);
Tensor probe_predict_continuous(const ProbeDecoder& probe, const Tensor& latents);

// Row-wise argmax; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);

// Fraction of exact matches. Throws UsageError for length mismatch or empty.
double eval_accuracy(const std::vector<int>& predictions, const std::vector<int>& truth);

// Mean over rows of the squared L2 distance (the squared convention is fixed
// repo-wide). Throws UsageError on shape mismatch or empty input.
double eval_mse(const Tensor& predictions, const Tensor& truth);

// Standard Pearson r. Throws UsageError for length mismatch or fewer than two
// points, NumericError when either side has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// The full probe protocol on one frozen model: extract latents over the
// held-out split, train a fresh probe for 3 epochs, report its accuracy
// (discrete control) or row-MSE (continuous) on that same split. Never
// mutates the model. Throws UsageError for an empty split.
ProbeResult run_probe(LamModel& model, const EncodedSplit& heldout, uint64_t seed,
                      const std::string& checkpoint_id);

// Fraction of episodes in which the composed policy (action decoder over the
// task-conditioned latent policy) reaches the goal within the horizon.
// Deterministic per seed. Throws UsageError when the goal is disabled or
// episodes/horizon are not positive.
double rollout_success(LamModel& model, const EnvConfig& env, int episodes, int horizon,
                       uint64_t seed);
// Reference rollouts with the scripted expert / uniform-random actions.
double rollout_success_expert(const EnvConfig& env, int episodes, int horizon, uint64_t seed);
double rollout_success_random(const EnvConfig& env, int episodes, int horizon, uint64_t seed);

// One completed run in an experiment grid.
struct RunRecord {
    std::string variant;
    double action_ratio = 0.0;
    std::optional<double> lambda;  // set only for λ-sweep cells
    uint64_t seed = 0;
    MetricKind metric_kind = MetricKind::Accuracy;
    double probe_metric = 0.0;
    std::optional<double> success;  // downstream rollout, when evaluated
    double wall_seconds = 0.0;
};

// Per-(variant, ratio, λ) aggregate over seeds. stddev is the sample standard
// deviation (0 for a single seed). impr_vs_lapo = cell mean minus the mean
// over all LAPO rows; absent when the table has no LAPO baseline.
struct CellSummary {
    std::string variant;
    double action_ratio = 0.0;
    std::optional<double> lambda;
    int n_seeds = 0;
    double mean = 0.0;
    double stddev = 0.0;
    std::optional<double> impr_vs_lapo;
};

struct ExperimentTable {
    std::vector<RunRecord> rows;
    std::vector<CellSummary> cells;
};

// Builds the table: sorts rows, computes per-cell mean/std plus improvement
// against the LAPO baseline. Throws UsageError for an empty input or a
// duplicate (variant, ratio, λ, seed) key.
ExperimentTable aggregate_experiments(std::vector<RunRecord> rows);

// Long-format CSV, header "variant,action_ratio,seed,metric,value"; one row
// per recorded metric of each run (probe metric, success, wall seconds).
void write_table_csv(const ExperimentTable& table, const std::string& path);
// Per-cell summary as JSON.
void write_summary_json(const ExperimentTable& table, const std::string& path);
// Plot-ready series: probe metric vs action ratio per variant.
void write_ratio_series_csv(const ExperimentTable& table, const std::string& path);
// Plot-ready series: probe metric vs λ per variant (λ-sweep cells only).
void write_lambda_series_csv(const ExperimentTable& table, const std::string& path);

}  // namespace laof
