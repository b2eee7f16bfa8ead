#pragma once

#include <cstdint>
#include <string>

#include "laof/dataset.hpp"
#include "laof/env.hpp"

namespace laof {

enum class PolicyKind : uint8_t { Expert = 0, UniformRandom = 1, EpsilonMixture = 2 };

// Where the stored flow comes from. flow_uv.bin always holds the source field
// before masking; flow_rgb.bin holds the training form: the codec image,
// agent-masked for every source except Oracle (which stays unmasked to study
// the effect of masking itself).
enum class FlowSource : uint8_t {
    OracleMasked = 0,   // exact sprite displacement, agent-masked
    Oracle = 1,         // exact sprite displacement, unmasked
    HornSchunck = 2,    // estimated from the rendered frames, agent-masked reference mask
    OracleNoise = 3,    // exact displacement + gaussian noise, agent-masked
};

std::string to_string(PolicyKind p);
std::string to_string(FlowSource f);
PolicyKind policy_from_string(const std::string& s);    // UsageError on unknown
FlowSource flow_source_from_string(const std::string& s);

struct DatagenOptions {
    FlowSource flow_source = FlowSource::OracleMasked;
    float codec_sigma = 0.01f;     // flow->RGB normalization
    float noise_sigma = 0.25f;     // OracleNoise only
    float hs_alpha = 1.0f;         // HornSchunck only
    int hs_iterations = 200;       // HornSchunck only
    float epsilon = 0.3f;          // EpsilonMixture random-action probability
    int max_episode_steps = 0;     // 0 -> height + width
};

// Rolls episodes with the given behavior policy until exactly n_transitions
// records exist, then writes them as a dataset at out_dir. Episodes end on
// goal arrival or after max_episode_steps; every 10th episode goes to the
// test split. Deterministic for (config, n_transitions, policy, seed,
// options). Throws UsageError for n_transitions < 1 and propagates
// environment/storage errors.
DatasetManifest generate_dataset(const EnvConfig& config, int64_t n_transitions,
                                 PolicyKind policy, const std::string& out_dir, uint64_t seed,
                                 const DatagenOptions& options = {});

}  // namespace laof
