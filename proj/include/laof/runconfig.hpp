#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "laof/datagen.hpp"
#include "laof/env.hpp"
#include "laof/model.hpp"
#include "laof/train.hpp"

namespace laof {

// The JSON run configuration consumed by the laof_lab executable. One
// document describes any subcommand; each subcommand reads the sections it
// needs and ignores the rest, but every present key is validated strictly.

// gen-data inputs: how many transitions to roll and with which policy/flow.
struct DataSection {
    int64_t n_transitions = 20000;
    PolicyKind policy = PolicyKind::EpsilonMixture;
    DatagenOptions options;  // flow source, codec sigma, policy epsilon, ...
    uint64_t seed = 0;
};

// Model shape. State dimension, control mode, and task count are always
// derived from the dataset's environment, so they are not configurable here.
struct ModelSection {
    Variant variant = Variant::LAOF;
    LatentMode latent_mode = LatentMode::Continuous;
    int latent_dim = 16;
    int hidden = 256;
    int codebook_size = 64;
    float beta = 0.25f;
    int task_embed_dim = 8;
    uint64_t encoder_seed = 100;
};

// Mirrors StageConfig: negative epochs/batch_size/lr mean stage defaults.
struct StageSection {
    int epochs = -1;
    int batch_size = -1;
    float lr = -1.0f;
    double action_ratio = 0.0;
    std::optional<double> lambda;
    uint64_t seed = 0;
};

// Grid for the sweep subcommand: variants x action_ratios x lambdas x seeds.
// An empty lambda list means no lambda override (one cell per ratio).
struct SweepSection {
    std::vector<Variant> variants;
    std::vector<double> action_ratios;
    std::vector<double> lambdas;
    std::vector<uint64_t> seeds;
};

// Probe/rollout knobs for the eval subcommand.
struct EvalSection {
    int episodes = 100;
    int horizon = 64;
    uint64_t rollout_seed = 7;
    uint64_t probe_seed = 11;
};

struct RunConfig {
    std::string subcommand;  // informational: which subcommand wrote this
    EnvConfig env;
    DataSection data;
    ModelSection model;
    StageSection stage;
    SweepSection sweep;
    EvalSection eval;
    std::string dataset_dir;  // input dataset (training/eval subcommands)
    std::string out_dir;      // output directory
    std::string prior;        // prior checkpoint path (distill/finetune)
    std::string checkpoint;   // checkpoint to evaluate (eval)
    std::string table;        // existing table.csv (export)
};

// Parses a config file. Throws StateError when the file cannot be opened,
// FormatError with line/key diagnostics for malformed JSON, unknown keys, or
// wrong value types, and UsageError/ConfigError for invalid enum names or
// out-of-range values.
RunConfig parse_run_config(const std::string& path);

// Serializes the full configuration with every field explicit (absent
// optionals omitted), pretty-printed with sorted keys, so a written snapshot
// re-parses to an identical configuration.
std::string run_config_json(const RunConfig& config);

// Convenience: run_config_json written to path. Throws StateError on failure.
void write_run_config(const RunConfig& config, const std::string& path);

}  // namespace laof
