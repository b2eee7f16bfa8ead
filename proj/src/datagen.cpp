#include "laof/datagen.hpp"

#include <random>

#include "laof/errors.hpp"
#include "laof/rng.hpp"

namespace laof {

std::string to_string(PolicyKind p) {
    switch (p) {
        case PolicyKind::Expert: return "expert";
        case PolicyKind::UniformRandom: return "uniform-random";
        case PolicyKind::EpsilonMixture: return "epsilon-mixture";
    }
    return "unknown";
}

std::string to_string(FlowSource f) {
    switch (f) {
        case FlowSource::OracleMasked: return "oracle-masked";
        case FlowSource::Oracle: return "oracle";
        case FlowSource::HornSchunck: return "horn-schunck";
        case FlowSource::OracleNoise: return "oracle-noise";
    }
    return "unknown";
}

PolicyKind policy_from_string(const std::string& s) {
    if (s == "expert") return PolicyKind::Expert;
    if (s == "uniform-random") return PolicyKind::UniformRandom;
    if (s == "epsilon-mixture") return PolicyKind::EpsilonMixture;
    throw UsageError("unknown policy '" + s + "'");
}

FlowSource flow_source_from_string(const std::string& s) {
    if (s == "oracle-masked") return FlowSource::OracleMasked;
    if (s == "oracle") return FlowSource::Oracle;
    if (s == "horn-schunck") return FlowSource::HornSchunck;
    if (s == "oracle-noise") return FlowSource::OracleNoise;
    throw UsageError("unknown flow source '" + s + "'");
}

DatasetManifest generate_dataset(const EnvConfig& config, int64_t n_transitions,
                                 PolicyKind policy, const std::string& out_dir, uint64_t seed,
                                 const DatagenOptions& options) {
    if (n_transitions < 1) throw UsageError("generate_dataset: n_transitions must be >= 1");
    config.validate();
    if (options.codec_sigma <= 0.0f) throw UsageError("generate_dataset: codec_sigma must be > 0");

    const int max_steps = options.max_episode_steps > 0 ? options.max_episode_steps
                                                        : config.height + config.width;
    std::mt19937_64 policy_rng(splitmix64(seed ^ 0xBEEC0DEULL));
    std::mt19937_64 noise_rng(splitmix64(seed ^ 0x9015EULL));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::normal_distribution<float> noise(0.0f, options.noise_sigma);

    std::vector<Transition> transitions;
    transitions.reserve(static_cast<size_t>(n_transitions));
    std::vector<int32_t> train_eps, test_eps;

    const uint64_t episode_base = splitmix64(seed);
    for (int32_t ep = 0; int64_t(transitions.size()) < n_transitions; ++ep) {
        EnvState st = env_reset(config, episode_base + uint64_t(ep));
        (ep % 10 == 4 ? test_eps : train_eps).push_back(ep);
        for (int t = 0; t < max_steps && int64_t(transitions.size()) < n_transitions; ++t) {
            ActionValue action;
            switch (policy) {
                case PolicyKind::Expert: action = scripted_expert(st); break;
                case PolicyKind::UniformRandom:
                    action = random_action(config.control_mode, policy_rng);
                    break;
                case PolicyKind::EpsilonMixture:
                    action = coin(policy_rng) < options.epsilon
                                 ? random_action(config.control_mode, policy_rng)
                                 : scripted_expert(st);
                    break;
            }
            auto [next, reached] = env_step(st, action);

            Transition tr;
            tr.obs = render(st);
            tr.next_obs = render(next);
            tr.mask = oracle_agent_mask(st);
            FlowField uv = oracle_flow(st, next);
            uv.priority.clear();  // provenance is a live-oracle concern, not data
            switch (options.flow_source) {
                case FlowSource::OracleMasked:
                case FlowSource::Oracle:
                    break;
                case FlowSource::HornSchunck:
                    uv = estimate_flow_hs(tr.obs, tr.next_obs, options.hs_alpha,
                                          options.hs_iterations);
                    break;
                case FlowSource::OracleNoise:
                    for (auto& u : uv.u) u += noise(noise_rng);
                    for (auto& v : uv.v) v += noise(noise_rng);
                    break;
            }
            tr.flow_rgb = flow_to_rgb(uv, options.codec_sigma);
            if (options.flow_source != FlowSource::Oracle) {
                tr.flow_rgb = mask_flow(tr.flow_rgb, tr.mask);
            }
            tr.flow_uv = std::move(uv);
            tr.action = action;
            tr.task_id = st.task_id;
            tr.episode_id = ep;
            tr.frame_index = t;
            transitions.push_back(std::move(tr));

            st = std::move(next);
            if (reached) break;
        }
    }

    DatasetMeta meta;
    meta.env = config;
    meta.flow_source = to_string(options.flow_source);
    meta.policy = to_string(policy);
    meta.seed = seed;
    meta.train_episodes = std::move(train_eps);
    meta.test_episodes = std::move(test_eps);
    return write_dataset(transitions, out_dir, meta);
}

}  // namespace laof
