#include "laof/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "laof/errors.hpp"
#include "laof/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace laof {

namespace {

std::string mode_to_string(ControlMode m) {
    return m == ControlMode::Discrete5 ? "discrete5" : "continuous2d";
}

ControlMode mode_from_string(const std::string& s) {
    if (s == "discrete5") return ControlMode::Discrete5;
    if (s == "continuous2d") return ControlMode::Continuous2d;
    throw FormatError("manifest: unknown control_mode '" + s + "'");
}

void require_keys(const json& j, const std::set<std::string>& expected, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!expected.count(key)) throw FormatError("manifest: unknown key '" + key + "' in " + where);
    }
    for (const auto& key : expected) {
        if (!j.contains(key)) throw FormatError("manifest: missing key '" + key + "' in " + where);
    }
}

template <typename T>
void write_bytes(std::ofstream& out, const T* p, size_t n, const std::string& file) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
    if (!out) throw StateError("write_dataset: failed writing " + file);
}

std::vector<char> read_file_exact(const fs::path& path, size_t expected_bytes) {
    std::error_code ec;
    const auto actual = fs::file_size(path, ec);
    if (ec) throw CorruptionError("read_dataset: missing file " + path.filename().string());
    if (actual != expected_bytes) {
        throw CorruptionError("read_dataset: " + path.filename().string() + " holds " +
                              std::to_string(actual) + " bytes, manifest implies " +
                              std::to_string(expected_bytes));
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StateError("read_dataset: cannot open " + path.filename().string());
    std::vector<char> bytes(expected_bytes);
    in.read(bytes.data(), static_cast<std::streamsize>(expected_bytes));
    if (!in) throw CorruptionError("read_dataset: short read from " + path.filename().string());
    return bytes;
}

// Deterministic Fisher-Yates; std::shuffle's sequence is
// implementation-defined, which would tie batch order to the stdlib version.
template <typename T>
void shuffle_ids(std::vector<T>& ids, uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (size_t i = ids.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng() % i);
        std::swap(ids[i - 1], ids[j]);
    }
}

}  // namespace

Transition Dataset::get(int64_t i) const {
    const int H = manifest.env.height, W = manifest.env.width;
    const size_t frame = size_t(H) * W * 3, px = size_t(H) * W;
    Transition t;
    t.obs = RgbImage(H, W);
    t.next_obs = RgbImage(H, W);
    t.flow_rgb = RgbImage(H, W);
    std::copy_n(obs.begin() + int64_t(i * 2 * frame), frame, t.obs.data.begin());
    std::copy_n(obs.begin() + int64_t((i * 2 + 1) * frame), frame, t.next_obs.data.begin());
    std::copy_n(flow_rgb.begin() + int64_t(i * frame), frame, t.flow_rgb.data.begin());
    t.flow_uv = FlowField(H, W);
    for (size_t p = 0; p < px; ++p) {
        t.flow_uv.u[p] = flow_uv[size_t(i) * px * 2 + 2 * p];
        t.flow_uv.v[p] = flow_uv[size_t(i) * px * 2 + 2 * p + 1];
    }
    t.mask = Mask(H, W);
    std::copy_n(masks.begin() + int64_t(i * px), px, t.mask.data.begin());
    t.action = actions[size_t(i)];
    t.episode_id = episode_of(i);
    t.task_id = manifest.task_ids[size_t(t.episode_id)];
    t.frame_index = static_cast<int32_t>(i - episode_starts[size_t(t.episode_id)]);
    return t;
}

int32_t Dataset::episode_of(int64_t i) const {
    auto it = std::upper_bound(episode_starts.begin(), episode_starts.end(), uint32_t(i));
    return static_cast<int32_t>(it - episode_starts.begin() - 1);
}

int32_t Dataset::task_of(int64_t i) const { return manifest.task_ids[size_t(episode_of(i))]; }

std::vector<int64_t> Dataset::split_ids(bool train) const {
    const auto& eps = train ? manifest.train_episodes : manifest.test_episodes;
    std::set<int32_t> wanted(eps.begin(), eps.end());
    std::vector<int64_t> ids;
    for (int64_t i = 0; i < manifest.n_transitions; ++i) {
        if (wanted.count(episode_of(i))) ids.push_back(i);
    }
    return ids;
}

DatasetManifest write_dataset(const std::vector<Transition>& transitions,
                              const std::string& dir, const DatasetMeta& meta) {
    if (transitions.empty()) throw UsageError("write_dataset: no transitions");
    meta.env.validate();
    const int H = meta.env.height, W = meta.env.width;
    if (transitions.front().obs.height != H || transitions.front().obs.width != W) {
        throw UsageError("write_dataset: transition frames do not match the config dimensions");
    }

    // Episode boundaries and per-episode tasks from the sequential grouping.
    std::vector<uint32_t> starts;
    std::vector<int32_t> task_ids;
    int32_t prev_ep = -1;
    for (size_t i = 0; i < transitions.size(); ++i) {
        const auto& t = transitions[i];
        if (t.episode_id != prev_ep) {
            if (t.episode_id != prev_ep + 1) {
                throw UsageError("write_dataset: transitions must be grouped by consecutive episode ids");
            }
            starts.push_back(static_cast<uint32_t>(i));
            task_ids.push_back(t.task_id);
            prev_ep = t.episode_id;
        }
        if (t.action.mode != meta.env.control_mode) {
            throw UsageError("write_dataset: action mode does not match the config");
        }
    }

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StateError("write_dataset: cannot create directory " + dir);

    auto open = [&](const char* name) {
        std::ofstream out(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
        if (!out) throw StateError(std::string("write_dataset: cannot open ") + name);
        return out;
    };

    {
        std::ofstream obs = open("obs.bin"), frgb = open("flow_rgb.bin"), fuv = open("flow_uv.bin"),
                      msk = open("masks.bin"), act = open("actions.bin"), eps = open("episodes.bin");
        const size_t px = size_t(H) * W;
        std::vector<float> uv_row(px * 2);
        for (const auto& t : transitions) {
            write_bytes(obs, t.obs.data.data(), t.obs.data.size(), "obs.bin");
            write_bytes(obs, t.next_obs.data.data(), t.next_obs.data.size(), "obs.bin");
            write_bytes(frgb, t.flow_rgb.data.data(), t.flow_rgb.data.size(), "flow_rgb.bin");
            for (size_t p = 0; p < px; ++p) {
                uv_row[2 * p] = t.flow_uv.u[p];
                uv_row[2 * p + 1] = t.flow_uv.v[p];
            }
            write_bytes(fuv, uv_row.data(), uv_row.size(), "flow_uv.bin");
            write_bytes(msk, t.mask.data.data(), t.mask.data.size(), "masks.bin");
            if (meta.env.control_mode == ControlMode::Discrete5) {
                const uint16_t a = static_cast<uint16_t>(t.action.discrete);
                write_bytes(act, &a, 1, "actions.bin");
            } else {
                const float a[2] = {t.action.dx, t.action.dy};
                write_bytes(act, a, 2, "actions.bin");
            }
        }
        write_bytes(eps, starts.data(), starts.size(), "episodes.bin");
    }

    DatasetManifest m;
    m.path = dir;
    m.env = meta.env;
    m.n_transitions = static_cast<int64_t>(transitions.size());
    m.n_episodes = static_cast<int64_t>(starts.size());
    m.train_episodes = meta.train_episodes;
    m.test_episodes = meta.test_episodes;
    m.task_ids = task_ids;
    m.flow_source = meta.flow_source;
    m.policy = meta.policy;
    m.seed = meta.seed;

    json j;
    j["version"] = m.version;
    j["env"] = {{"height", H},
                {"width", W},
                {"n_distractors", meta.env.n_distractors},
                {"distractor_speed", meta.env.distractor_speed},
                {"agent_step", meta.env.agent_step},
                {"control_mode", mode_to_string(meta.env.control_mode)},
                {"palette_seed", meta.env.palette_seed},
                {"goal_enabled", meta.env.goal_enabled}};
    j["counts"] = {{"transitions", m.n_transitions}, {"episodes", m.n_episodes}};
    j["splits"] = {{"train_episodes", m.train_episodes}, {"test_episodes", m.test_episodes}};
    j["task_ids"] = m.task_ids;
    j["flow_source"] = m.flow_source;
    j["policy"] = m.policy;
    j["seed"] = m.seed;
    j["ratios"] = m.ratios;
    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf) throw StateError("write_dataset: cannot open manifest.json");
    mf << j.dump(2) << "\n";
    if (!mf) throw StateError("write_dataset: failed writing manifest.json");
    return m;
}

Dataset read_dataset(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream mf(root / "manifest.json");
    if (!mf) throw StateError("read_dataset: no manifest.json in " + dir);
    json j;
    try {
        mf >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("read_dataset: malformed manifest.json: ") + e.what());
    }

    require_keys(j, {"version", "env", "counts", "splits", "task_ids", "flow_source", "policy",
                     "seed", "ratios"},
                 "manifest");
    require_keys(j["env"], {"height", "width", "n_distractors", "distractor_speed", "agent_step",
                            "control_mode", "palette_seed", "goal_enabled"},
                 "env");
    require_keys(j["counts"], {"transitions", "episodes"}, "counts");
    require_keys(j["splits"], {"train_episodes", "test_episodes"}, "splits");
    if (j["version"].get<int>() != 1) throw FormatError("read_dataset: unsupported manifest version");

    Dataset ds;
    DatasetManifest& m = ds.manifest;
    m.path = dir;
    const json& je = j["env"];
    m.env.height = je["height"].get<int>();
    m.env.width = je["width"].get<int>();
    m.env.n_distractors = je["n_distractors"].get<int>();
    m.env.distractor_speed = je["distractor_speed"].get<float>();
    m.env.agent_step = je["agent_step"].get<int>();
    m.env.control_mode = mode_from_string(je["control_mode"].get<std::string>());
    m.env.palette_seed = je["palette_seed"].get<uint64_t>();
    m.env.goal_enabled = je["goal_enabled"].get<bool>();
    m.env.validate();
    m.n_transitions = j["counts"]["transitions"].get<int64_t>();
    m.n_episodes = j["counts"]["episodes"].get<int64_t>();
    m.train_episodes = j["splits"]["train_episodes"].get<std::vector<int32_t>>();
    m.test_episodes = j["splits"]["test_episodes"].get<std::vector<int32_t>>();
    m.task_ids = j["task_ids"].get<std::vector<int32_t>>();
    m.flow_source = j["flow_source"].get<std::string>();
    m.policy = j["policy"].get<std::string>();
    m.seed = j["seed"].get<uint64_t>();
    m.ratios = j["ratios"].get<std::vector<double>>();

    if (m.n_transitions < 1 || m.n_episodes < 1) {
        throw CorruptionError("read_dataset: manifest declares an empty dataset");
    }
    if (int64_t(m.task_ids.size()) != m.n_episodes) {
        throw CorruptionError("read_dataset: task_ids count disagrees with episode count");
    }
    std::set<int32_t> all_eps;
    for (int32_t e : m.train_episodes) all_eps.insert(e);
    for (int32_t e : m.test_episodes) all_eps.insert(e);
    if (int64_t(all_eps.size()) != int64_t(m.train_episodes.size() + m.test_episodes.size()) ||
        int64_t(all_eps.size()) != m.n_episodes ||
        (!all_eps.empty() && (*all_eps.begin() < 0 || *all_eps.rbegin() >= m.n_episodes))) {
        throw CorruptionError("read_dataset: splits do not partition the episodes");
    }

    const size_t N = static_cast<size_t>(m.n_transitions);
    const size_t frame = size_t(m.env.height) * m.env.width * 3;
    const size_t px = size_t(m.env.height) * m.env.width;
    const bool discrete = m.env.control_mode == ControlMode::Discrete5;

    auto obs_bytes = read_file_exact(root / "obs.bin", N * 2 * frame);
    ds.obs.assign(obs_bytes.begin(), obs_bytes.end());
    auto frgb_bytes = read_file_exact(root / "flow_rgb.bin", N * frame);
    ds.flow_rgb.assign(frgb_bytes.begin(), frgb_bytes.end());
    auto fuv_bytes = read_file_exact(root / "flow_uv.bin", N * px * 2 * sizeof(float));
    ds.flow_uv.resize(N * px * 2);
    std::memcpy(ds.flow_uv.data(), fuv_bytes.data(), fuv_bytes.size());
    auto mask_bytes = read_file_exact(root / "masks.bin", N * px);
    ds.masks.assign(mask_bytes.begin(), mask_bytes.end());

    auto act_bytes = read_file_exact(root / "actions.bin", N * (discrete ? 2 : 8));
    ds.actions.resize(N);
    for (size_t i = 0; i < N; ++i) {
        if (discrete) {
            uint16_t a;
            std::memcpy(&a, act_bytes.data() + i * 2, 2);
            if (a >= kNumDiscreteActions) {
                throw CorruptionError("read_dataset: actions.bin holds an out-of-range action");
            }
            ds.actions[i] = ActionValue::make_discrete(a);
        } else {
            float a[2];
            std::memcpy(a, act_bytes.data() + i * 8, 8);
            ds.actions[i] = ActionValue::make_continuous(a[0], a[1]);
        }
    }

    auto ep_bytes = read_file_exact(root / "episodes.bin", size_t(m.n_episodes) * 4);
    ds.episode_starts.resize(size_t(m.n_episodes));
    std::memcpy(ds.episode_starts.data(), ep_bytes.data(), ep_bytes.size());
    if (ds.episode_starts.front() != 0) {
        throw CorruptionError("read_dataset: episodes.bin does not start at offset 0");
    }
    for (size_t e = 1; e < ds.episode_starts.size(); ++e) {
        if (ds.episode_starts[e] <= ds.episode_starts[e - 1] ||
            ds.episode_starts[e] >= N) {
            throw CorruptionError("read_dataset: episodes.bin offsets are not strictly increasing");
        }
    }
    return ds;
}

std::pair<std::vector<int64_t>, std::vector<int64_t>> split_action_ratio(
    const Dataset& dataset, double ratio, uint64_t seed) {
    if (!(ratio > 0.0) || ratio > 1.0) {
        throw UsageError("split_action_ratio: ratio must lie in (0, 1]");
    }
    std::vector<int64_t> train = dataset.split_ids(true);
    if (train.empty()) throw UsageError("split_action_ratio: the train split is empty");
    const auto k = static_cast<size_t>(std::llround(ratio * double(train.size())));
    shuffle_ids(train, splitmix64(seed ^ 0xAC710E5ULL));
    std::vector<int64_t> labeled(train.begin(), train.begin() + std::min(k, train.size()));
    std::vector<int64_t> unlabeled(train.begin() + std::min(k, train.size()), train.end());
    std::sort(labeled.begin(), labeled.end());
    std::sort(unlabeled.begin(), unlabeled.end());
    return {std::move(labeled), std::move(unlabeled)};
}

std::vector<std::vector<int64_t>> epoch_batches(const std::vector<int64_t>& ids,
                                                int batch_size, uint64_t shuffle_seed,
                                                int64_t epoch) {
    if (ids.empty()) throw UsageError("epoch_batches: empty id list");
    if (batch_size < 1) throw UsageError("epoch_batches: batch_size must be >= 1");
    std::vector<int64_t> order = ids;
    shuffle_ids(order, splitmix64(shuffle_seed) ^ splitmix64(0x51ED2700ULL + uint64_t(epoch)));
    std::vector<std::vector<int64_t>> batches;
    for (size_t i = 0; i < order.size(); i += size_t(batch_size)) {
        batches.emplace_back(order.begin() + int64_t(i),
                             order.begin() + int64_t(std::min(order.size(), i + size_t(batch_size))));
    }
    return batches;
}

}  // namespace laof
