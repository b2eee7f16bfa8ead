#include "laof/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "laof/errors.hpp"
#include "laof/rng.hpp"

namespace laof {

namespace {

struct Rgb {
    uint8_t r, g, b;
};

// Reserved agent colors (never appear in any other palette).
constexpr Rgb kAgentRing{255, 255, 255};
constexpr Rgb kAgentCore{255, 128, 0};
constexpr Rgb kGoalColor{0, 220, 0};

constexpr Rgb kDistractorPalette[8] = {
    {220, 40, 40}, {60, 90, 230}, {235, 220, 60},  {200, 60, 200},
    {60, 200, 220}, {130, 60, 220}, {150, 90, 40}, {240, 130, 180},
};

constexpr Rgb kTilePalette[8] = {
    {24, 28, 36}, {36, 32, 28}, {28, 40, 32}, {40, 36, 44},
    {32, 24, 40}, {44, 40, 28}, {20, 36, 44}, {36, 44, 36},
};

int round_px(float v) { return static_cast<int>(std::lround(v)); }

bool boxes_overlap(int x1, int y1, int x2, int y2) {
    return std::abs(x1 - x2) < kSpriteSize && std::abs(y1 - y2) < kSpriteSize;
}

void fill_sprite(RgbImage& img, int x0, int y0, Rgb c) {
    for (int y = y0; y < y0 + kSpriteSize; ++y)
        for (int x = x0; x < x0 + kSpriteSize; ++x) {
            img.at(y, x, 0) = c.r;
            img.at(y, x, 1) = c.g;
            img.at(y, x, 2) = c.b;
        }
}

void stamp_owner(std::vector<int16_t>& owner, int width, int x0, int y0, int16_t id) {
    for (int y = y0; y < y0 + kSpriteSize; ++y)
        for (int x = x0; x < x0 + kSpriteSize; ++x) owner[size_t(y) * width + x] = id;
}

// Reflecting bounce on [0, limit].
void bounce(float& pos, float& vel, float limit) {
    pos += vel;
    if (pos < 0.0f) {
        pos = -pos;
        vel = -vel;
    } else if (pos > limit) {
        pos = 2.0f * limit - pos;
        vel = -vel;
    }
}

bool configs_equal(const EnvConfig& a, const EnvConfig& b) {
    return a.height == b.height && a.width == b.width && a.n_distractors == b.n_distractors &&
           a.distractor_speed == b.distractor_speed && a.agent_step == b.agent_step &&
           a.control_mode == b.control_mode && a.palette_seed == b.palette_seed &&
           a.goal_enabled == b.goal_enabled;
}

EnvState reset_impl(const EnvConfig& config, uint64_t seed, int forced_task) {
    config.validate();
    EnvState s;
    s.config = config;
    s.rng.seed(splitmix64(seed));

    const int tx = config.tiles_x(), ty = config.tiles_y();
    s.tile_colors.resize(size_t(tx) * ty);
    std::mt19937_64 palette_rng(splitmix64(config.palette_seed));
    std::uniform_int_distribution<int> tile_pick(0, 7);
    for (auto& t : s.tile_colors) t = static_cast<uint8_t>(tile_pick(palette_rng));

    const int max_x = config.width - kSpriteSize;
    const int max_y = config.height - kSpriteSize;

    if (config.goal_enabled) {
        std::uniform_int_distribution<int> task_pick(0, config.num_tasks() - 1);
        s.task_id = forced_task >= 0 ? forced_task : task_pick(s.rng);
        // The goal sits inside its tile, one pixel in from the tile corner.
        s.goal_x = (s.task_id % tx) * kTileSize + 1;
        s.goal_y = (s.task_id / tx) * kTileSize + 1;
    }

    std::uniform_int_distribution<int> px(0, max_x), py(0, max_y);
    auto place = [&](int& out_x, int& out_y, const std::vector<std::pair<int, int>>& taken,
                     bool avoid_goal) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const int x = px(s.rng), y = py(s.rng);
            bool free = true;
            for (const auto& [ox, oy] : taken) free = free && !boxes_overlap(x, y, ox, oy);
            if (avoid_goal && config.goal_enabled) free = free && !boxes_overlap(x, y, s.goal_x, s.goal_y);
            if (free) {
                out_x = x;
                out_y = y;
                return;
            }
        }
        throw ConfigError("env_reset: could not place sprites without overlap; frame too crowded");
    };

    std::vector<std::pair<int, int>> taken;
    int ax = 0, ay = 0;
    place(ax, ay, taken, /*avoid_goal=*/true);
    s.agent_x = static_cast<float>(ax);
    s.agent_y = static_cast<float>(ay);
    taken.emplace_back(ax, ay);

    std::uniform_int_distribution<int> color_pick(0, 7);
    std::uniform_int_distribution<int> vel_pick(0, 7);
    s.distractors.resize(size_t(config.n_distractors));
    for (auto& d : s.distractors) {
        int dx = 0, dy = 0;
        place(dx, dy, taken, /*avoid_goal=*/false);
        taken.emplace_back(dx, dy);
        d.x = static_cast<float>(dx);
        d.y = static_cast<float>(dy);
        d.color = color_pick(s.rng);
        if (config.distractor_speed > 0.0f) {
            // The 8 non-zero velocity combinations over {-s, 0, +s}^2.
            const int combo = vel_pick(s.rng);
            const int idx = combo < 4 ? combo : combo + 1;  // skip (0,0) at center
            d.vx = static_cast<float>(idx % 3 - 1) * config.distractor_speed;
            d.vy = static_cast<float>(idx / 3 - 1) * config.distractor_speed;
        }
    }
    return s;
}

}  // namespace

void EnvConfig::validate() const {
    if (height <= 0 || width <= 0 || height % kTileSize != 0 || width % kTileSize != 0) {
        throw ConfigError("EnvConfig: height and width must be positive multiples of 8");
    }
    if (agent_step < 1) throw ConfigError("EnvConfig: agent_step must be >= 1");
    if (n_distractors < 0) throw ConfigError("EnvConfig: n_distractors must be >= 0");
    if (distractor_speed < 0.0f) throw ConfigError("EnvConfig: distractor_speed must be >= 0");
}

ActionValue ActionValue::make_discrete(int index) {
    ActionValue a;
    a.mode = ControlMode::Discrete5;
    a.discrete = index;
    return a;
}

ActionValue ActionValue::make_continuous(float dx, float dy) {
    ActionValue a;
    a.mode = ControlMode::Continuous2d;
    a.dx = dx;
    a.dy = dy;
    return a;
}

EnvState env_reset(const EnvConfig& config, uint64_t seed) { return reset_impl(config, seed, -1); }

EnvState env_reset_task(const EnvConfig& config, uint64_t seed, int task_id) {
    if (!config.goal_enabled) throw UsageError("env_reset_task: goal is disabled");
    if (task_id < 0 || task_id >= config.num_tasks()) {
        throw UsageError("env_reset_task: task_id out of range");
    }
    return reset_impl(config, seed, task_id);
}

std::pair<EnvState, bool> env_step(const EnvState& state, const ActionValue& action) {
    const EnvConfig& cfg = state.config;
    if (action.mode != cfg.control_mode) {
        throw UsageError("env_step: action mode does not match the environment's control mode");
    }
    float dx = 0.0f, dy = 0.0f;
    if (action.mode == ControlMode::Discrete5) {
        if (action.discrete < 0 || action.discrete >= kNumDiscreteActions) {
            throw UsageError("env_step: discrete action index out of range");
        }
        const float st = static_cast<float>(cfg.agent_step);
        switch (action.discrete) {
            case kUp: dy = -st; break;
            case kDown: dy = st; break;
            case kLeft: dx = -st; break;
            case kRight: dx = st; break;
            default: break;  // noop
        }
    } else {
        if (!(std::fabs(action.dx) <= kContinuousActionBound) ||
            !(std::fabs(action.dy) <= kContinuousActionBound)) {
            throw UsageError("env_step: continuous action outside [-3,3]^2");
        }
        dx = action.dx;
        dy = action.dy;
    }

    EnvState next = state;
    const float max_x = static_cast<float>(cfg.width - kSpriteSize);
    const float max_y = static_cast<float>(cfg.height - kSpriteSize);
    next.agent_x = std::clamp(state.agent_x + dx, 0.0f, max_x);
    next.agent_y = std::clamp(state.agent_y + dy, 0.0f, max_y);
    for (auto& d : next.distractors) {
        bounce(d.x, d.vx, max_x);
        bounce(d.y, d.vy, max_y);
    }
    next.step_index = state.step_index + 1;

    bool reached = false;
    if (cfg.goal_enabled) {
        const int gap = std::abs(round_px(next.agent_x) - next.goal_x) +
                        std::abs(round_px(next.agent_y) - next.goal_y);
        reached = gap <= 2;
    }
    return {std::move(next), reached};
}

RgbImage render(const EnvState& state) {
    const EnvConfig& cfg = state.config;
    RgbImage img(cfg.height, cfg.width);
    const int tx = cfg.tiles_x();
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const Rgb c = kTilePalette[state.tile_colors[size_t(y / kTileSize) * tx + x / kTileSize]];
            img.at(y, x, 0) = c.r;
            img.at(y, x, 1) = c.g;
            img.at(y, x, 2) = c.b;
        }
    }
    if (cfg.goal_enabled) fill_sprite(img, state.goal_x, state.goal_y, kGoalColor);
    for (const auto& d : state.distractors) {
        fill_sprite(img, round_px(d.x), round_px(d.y), kDistractorPalette[d.color]);
    }
    const int ax = round_px(state.agent_x), ay = round_px(state.agent_y);
    fill_sprite(img, ax, ay, kAgentRing);
    for (int y = ay + 1; y < ay + kSpriteSize - 1; ++y)
        for (int x = ax + 1; x < ax + kSpriteSize - 1; ++x) {
            img.at(y, x, 0) = kAgentCore.r;
            img.at(y, x, 1) = kAgentCore.g;
            img.at(y, x, 2) = kAgentCore.b;
        }
    return img;
}

FlowField oracle_flow(const EnvState& state, const EnvState& next_state) {
    if (!configs_equal(state.config, next_state.config)) {
        throw UsageError("oracle_flow: states come from different configurations");
    }
    if (next_state.step_index != state.step_index + 1 ||
        state.distractors.size() != next_state.distractors.size()) {
        throw UsageError("oracle_flow: second state is not the immediate successor of the first");
    }
    const EnvConfig& cfg = state.config;

    // Ownership raster in draw order; id doubles as warp priority.
    std::vector<int16_t> owner(size_t(cfg.height) * cfg.width, 0);
    const int16_t goal_id = 1;
    const int16_t agent_id = static_cast<int16_t>(2 + state.distractors.size());
    if (cfg.goal_enabled) stamp_owner(owner, cfg.width, state.goal_x, state.goal_y, goal_id);
    for (size_t i = 0; i < state.distractors.size(); ++i) {
        stamp_owner(owner, cfg.width, round_px(state.distractors[i].x),
                    round_px(state.distractors[i].y), static_cast<int16_t>(2 + i));
    }
    stamp_owner(owner, cfg.width, round_px(state.agent_x), round_px(state.agent_y), agent_id);

    // Per-sprite displacement of the rendered (rounded) position.
    std::vector<std::pair<float, float>> disp(size_t(agent_id) + 1, {0.0f, 0.0f});
    for (size_t i = 0; i < state.distractors.size(); ++i) {
        disp[2 + i] = {
            static_cast<float>(round_px(next_state.distractors[i].x) - round_px(state.distractors[i].x)),
            static_cast<float>(round_px(next_state.distractors[i].y) - round_px(state.distractors[i].y))};
    }
    disp[agent_id] = {static_cast<float>(round_px(next_state.agent_x) - round_px(state.agent_x)),
                      static_cast<float>(round_px(next_state.agent_y) - round_px(state.agent_y))};

    FlowField f(cfg.height, cfg.width);
    f.priority.assign(owner.begin(), owner.end());
    for (size_t i = 0; i < owner.size(); ++i) {
        f.u[i] = disp[owner[i]].first;
        f.v[i] = disp[owner[i]].second;
    }
    return f;
}

Mask oracle_agent_mask(const EnvState& state) {
    Mask m(state.config.height, state.config.width);
    const int ax = round_px(state.agent_x), ay = round_px(state.agent_y);
    for (int y = ay; y < ay + kSpriteSize; ++y)
        for (int x = ax; x < ax + kSpriteSize; ++x) m.at(y, x) = 1;
    return m;
}

ActionValue scripted_expert(const EnvState& state) {
    const EnvConfig& cfg = state.config;
    if (!cfg.goal_enabled) throw UsageError("scripted_expert: goal is disabled");
    if (cfg.control_mode == ControlMode::Continuous2d) {
        const float gx = static_cast<float>(state.goal_x) - state.agent_x;
        const float gy = static_cast<float>(state.goal_y) - state.agent_y;
        return ActionValue::make_continuous(
            std::clamp(gx, -kContinuousActionBound, kContinuousActionBound),
            std::clamp(gy, -kContinuousActionBound, kContinuousActionBound));
    }
    const int dx = state.goal_x - round_px(state.agent_x);
    const int dy = state.goal_y - round_px(state.agent_y);
    // A move only helps when the gap exceeds half a step; otherwise it
    // overshoots without reducing the distance.
    auto helps = [&](int gap) { return 2 * std::abs(gap) > cfg.agent_step; };
    if (std::abs(dx) >= std::abs(dy)) {
        if (helps(dx)) return ActionValue::make_discrete(dx > 0 ? kRight : kLeft);
        if (helps(dy)) return ActionValue::make_discrete(dy > 0 ? kDown : kUp);
    } else {
        if (helps(dy)) return ActionValue::make_discrete(dy > 0 ? kDown : kUp);
        if (helps(dx)) return ActionValue::make_discrete(dx > 0 ? kRight : kLeft);
    }
    return ActionValue::make_discrete(kNoop);
}

ActionValue random_action(ControlMode mode, std::mt19937_64& rng) {
    if (mode == ControlMode::Discrete5) {
        std::uniform_int_distribution<int> pick(0, kNumDiscreteActions - 1);
        return ActionValue::make_discrete(pick(rng));
    }
    std::uniform_real_distribution<float> pick(-kContinuousActionBound, kContinuousActionBound);
    const float dx = pick(rng);
    const float dy = pick(rng);
    return ActionValue::make_continuous(dx, dy);
}

}  // namespace laof
