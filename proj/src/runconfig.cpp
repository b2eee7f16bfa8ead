#include "laof/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "laof/errors.hpp"

using nlohmann::json;

namespace laof {

namespace {

std::string mode_to_string(ControlMode m) {
    return m == ControlMode::Discrete5 ? "discrete5" : "continuous2d";
}

ControlMode mode_from_string(const std::string& s) {
    if (s == "discrete5") return ControlMode::Discrete5;
    if (s == "continuous2d") return ControlMode::Continuous2d;
    throw FormatError("config: unknown control_mode '" + s + "'");
}

int line_of_offset(const std::string& text, size_t byte) {
    int line = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

void require_keys(const json& j, const std::set<std::string>& expected, const std::string& where) {
    if (!j.is_object()) throw FormatError("config: section '" + where + "' must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!expected.count(key)) {
            throw FormatError("config: unknown key '" + key + "' in " + where);
        }
    }
}

// Typed getters that name the offending key on a type mismatch.
template <typename T>
T get_as(const json& j, const std::string& key, const std::string& where, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError("config: wrong type for key '" + key + "' in " + where);
    }
}

std::string get_string(const json& j, const std::string& key, const std::string& where,
                       const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) {
        throw FormatError("config: wrong type for key '" + key + "' in " + where);
    }
    return j.at(key).get<std::string>();
}

void parse_env(const json& j, EnvConfig& env) {
    require_keys(j, {"height", "width", "n_distractors", "distractor_speed", "agent_step",
                     "control_mode", "palette_seed", "goal_enabled"},
                 "env");
    env.height = get_as<int>(j, "height", "env", env.height);
    env.width = get_as<int>(j, "width", "env", env.width);
    env.n_distractors = get_as<int>(j, "n_distractors", "env", env.n_distractors);
    env.distractor_speed = get_as<float>(j, "distractor_speed", "env", env.distractor_speed);
    env.agent_step = get_as<int>(j, "agent_step", "env", env.agent_step);
    if (j.contains("control_mode")) {
        env.control_mode = mode_from_string(get_string(j, "control_mode", "env", ""));
    }
    env.palette_seed = get_as<uint64_t>(j, "palette_seed", "env", env.palette_seed);
    env.goal_enabled = get_as<bool>(j, "goal_enabled", "env", env.goal_enabled);
}

void parse_data(const json& j, DataSection& data) {
    require_keys(j, {"n_transitions", "policy", "flow_source", "codec_sigma", "noise_sigma",
                     "hs_alpha", "hs_iterations", "epsilon", "max_episode_steps", "seed"},
                 "data");
    data.n_transitions = get_as<int64_t>(j, "n_transitions", "data", data.n_transitions);
    if (j.contains("policy")) {
        data.policy = policy_from_string(get_string(j, "policy", "data", ""));
    }
    if (j.contains("flow_source")) {
        data.options.flow_source =
            flow_source_from_string(get_string(j, "flow_source", "data", ""));
    }
    data.options.codec_sigma =
        get_as<float>(j, "codec_sigma", "data", data.options.codec_sigma);
    data.options.noise_sigma =
        get_as<float>(j, "noise_sigma", "data", data.options.noise_sigma);
    data.options.hs_alpha = get_as<float>(j, "hs_alpha", "data", data.options.hs_alpha);
    data.options.hs_iterations =
        get_as<int>(j, "hs_iterations", "data", data.options.hs_iterations);
    data.options.epsilon = get_as<float>(j, "epsilon", "data", data.options.epsilon);
    data.options.max_episode_steps =
        get_as<int>(j, "max_episode_steps", "data", data.options.max_episode_steps);
    data.seed = get_as<uint64_t>(j, "seed", "data", data.seed);
}

void parse_model(const json& j, ModelSection& model) {
    require_keys(j, {"variant", "latent_mode", "latent_dim", "hidden", "codebook_size", "beta",
                     "task_embed_dim", "encoder_seed"},
                 "model");
    if (j.contains("variant")) {
        model.variant = variant_from_string(get_string(j, "variant", "model", ""));
    }
    if (j.contains("latent_mode")) {
        model.latent_mode = latent_mode_from_string(get_string(j, "latent_mode", "model", ""));
    }
    model.latent_dim = get_as<int>(j, "latent_dim", "model", model.latent_dim);
    model.hidden = get_as<int>(j, "hidden", "model", model.hidden);
    model.codebook_size = get_as<int>(j, "codebook_size", "model", model.codebook_size);
    model.beta = get_as<float>(j, "beta", "model", model.beta);
    model.task_embed_dim = get_as<int>(j, "task_embed_dim", "model", model.task_embed_dim);
    model.encoder_seed = get_as<uint64_t>(j, "encoder_seed", "model", model.encoder_seed);
}

void parse_stage(const json& j, StageSection& stage) {
    require_keys(j, {"epochs", "batch_size", "lr", "action_ratio", "lambda", "seed"}, "stage");
    stage.epochs = get_as<int>(j, "epochs", "stage", stage.epochs);
    stage.batch_size = get_as<int>(j, "batch_size", "stage", stage.batch_size);
    stage.lr = get_as<float>(j, "lr", "stage", stage.lr);
    stage.action_ratio = get_as<double>(j, "action_ratio", "stage", stage.action_ratio);
    if (j.contains("lambda") && !j.at("lambda").is_null()) {
        if (!j.at("lambda").is_number()) {
            throw FormatError("config: wrong type for key 'lambda' in stage");
        }
        stage.lambda = j.at("lambda").get<double>();
        if (*stage.lambda < 0.0 || *stage.lambda > 1.0) {
            throw ConfigError("config: stage.lambda must lie in [0, 1]");
        }
    }
    stage.seed = get_as<uint64_t>(j, "seed", "stage", stage.seed);
}

void parse_sweep(const json& j, SweepSection& sweep) {
    require_keys(j, {"variants", "action_ratios", "lambdas", "seeds"}, "sweep");
    if (j.contains("variants")) {
        if (!j.at("variants").is_array()) {
            throw FormatError("config: wrong type for key 'variants' in sweep");
        }
        for (const json& v : j.at("variants")) {
            if (!v.is_string()) {
                throw FormatError("config: sweep.variants entries must be strings");
            }
            sweep.variants.push_back(variant_from_string(v.get<std::string>()));
        }
    }
    auto number_list = [&](const char* key, std::vector<double>& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_array()) {
            throw FormatError(std::string("config: wrong type for key '") + key + "' in sweep");
        }
        for (const json& v : j.at(key)) {
            if (!v.is_number()) {
                throw FormatError(std::string("config: sweep.") + key + " entries must be numbers");
            }
            out.push_back(v.get<double>());
        }
    };
    number_list("action_ratios", sweep.action_ratios);
    number_list("lambdas", sweep.lambdas);
    for (double r : sweep.action_ratios) {
        if (r < 0.0 || r > 1.0) throw ConfigError("config: sweep.action_ratios must lie in [0, 1]");
    }
    for (double l : sweep.lambdas) {
        if (l < 0.0 || l > 1.0) throw ConfigError("config: sweep.lambdas must lie in [0, 1]");
    }
    if (j.contains("seeds")) {
        if (!j.at("seeds").is_array()) {
            throw FormatError("config: wrong type for key 'seeds' in sweep");
        }
        for (const json& v : j.at("seeds")) {
            if (!v.is_number_unsigned()) {
                throw FormatError("config: sweep.seeds entries must be unsigned integers");
            }
            sweep.seeds.push_back(v.get<uint64_t>());
        }
    }
}

void parse_eval(const json& j, EvalSection& eval) {
    require_keys(j, {"episodes", "horizon", "rollout_seed", "probe_seed"}, "eval");
    eval.episodes = get_as<int>(j, "episodes", "eval", eval.episodes);
    eval.horizon = get_as<int>(j, "horizon", "eval", eval.horizon);
    eval.rollout_seed = get_as<uint64_t>(j, "rollout_seed", "eval", eval.rollout_seed);
    eval.probe_seed = get_as<uint64_t>(j, "probe_seed", "eval", eval.probe_seed);
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StateError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError("config: " + path + ":" + std::to_string(line_of_offset(text, e.byte)) +
                          ": " + e.what());
    }
    require_keys(j,
                 {"subcommand", "env", "data", "model", "stage", "sweep", "eval", "dataset_dir",
                  "out_dir", "prior", "checkpoint", "table"},
                 "top level");

    RunConfig cfg;
    cfg.subcommand = get_string(j, "subcommand", "top level", "");
    if (j.contains("env")) parse_env(j.at("env"), cfg.env);
    if (j.contains("data")) parse_data(j.at("data"), cfg.data);
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("stage")) parse_stage(j.at("stage"), cfg.stage);
    if (j.contains("sweep")) parse_sweep(j.at("sweep"), cfg.sweep);
    if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
    cfg.dataset_dir = get_string(j, "dataset_dir", "top level", "");
    cfg.out_dir = get_string(j, "out_dir", "top level", "");
    cfg.prior = get_string(j, "prior", "top level", "");
    cfg.checkpoint = get_string(j, "checkpoint", "top level", "");
    cfg.table = get_string(j, "table", "top level", "");
    return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["subcommand"] = cfg.subcommand;
    j["env"] = {{"height", cfg.env.height},
                {"width", cfg.env.width},
                {"n_distractors", cfg.env.n_distractors},
                {"distractor_speed", cfg.env.distractor_speed},
                {"agent_step", cfg.env.agent_step},
                {"control_mode", mode_to_string(cfg.env.control_mode)},
                {"palette_seed", cfg.env.palette_seed},
                {"goal_enabled", cfg.env.goal_enabled}};
    j["data"] = {{"n_transitions", cfg.data.n_transitions},
                 {"policy", to_string(cfg.data.policy)},
                 {"flow_source", to_string(cfg.data.options.flow_source)},
                 {"codec_sigma", cfg.data.options.codec_sigma},
                 {"noise_sigma", cfg.data.options.noise_sigma},
                 {"hs_alpha", cfg.data.options.hs_alpha},
                 {"hs_iterations", cfg.data.options.hs_iterations},
                 {"epsilon", cfg.data.options.epsilon},
                 {"max_episode_steps", cfg.data.options.max_episode_steps},
                 {"seed", cfg.data.seed}};
    j["model"] = {{"variant", to_string(cfg.model.variant)},
                  {"latent_mode", to_string(cfg.model.latent_mode)},
                  {"latent_dim", cfg.model.latent_dim},
                  {"hidden", cfg.model.hidden},
                  {"codebook_size", cfg.model.codebook_size},
                  {"beta", cfg.model.beta},
                  {"task_embed_dim", cfg.model.task_embed_dim},
                  {"encoder_seed", cfg.model.encoder_seed}};
    j["stage"] = {{"epochs", cfg.stage.epochs},
                  {"batch_size", cfg.stage.batch_size},
                  {"lr", cfg.stage.lr},
                  {"action_ratio", cfg.stage.action_ratio},
                  {"seed", cfg.stage.seed}};
    if (cfg.stage.lambda) j["stage"]["lambda"] = *cfg.stage.lambda;
    json variants = json::array();
    for (Variant v : cfg.sweep.variants) variants.push_back(to_string(v));
    j["sweep"] = {{"variants", variants},
                  {"action_ratios", cfg.sweep.action_ratios},
                  {"lambdas", cfg.sweep.lambdas},
                  {"seeds", cfg.sweep.seeds}};
    j["eval"] = {{"episodes", cfg.eval.episodes},
                 {"horizon", cfg.eval.horizon},
                 {"rollout_seed", cfg.eval.rollout_seed},
                 {"probe_seed", cfg.eval.probe_seed}};
    j["dataset_dir"] = cfg.dataset_dir;
    j["out_dir"] = cfg.out_dir;
    j["prior"] = cfg.prior;
    j["checkpoint"] = cfg.checkpoint;
    j["table"] = cfg.table;
    return j.dump(2) + "\n";
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw StateError("config: cannot open " + path + " for writing");
    out << run_config_json(cfg);
    if (!out) throw StateError("config: failed writing " + path);
}

}  // namespace laof
