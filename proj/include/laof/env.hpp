#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "laof/flow.hpp"
#include "laof/image.hpp"

namespace laof {

enum class ControlMode : uint8_t { Discrete5 = 0, Continuous2d = 1 };

// Discrete action indices. Screen coordinates: y grows downward, so Up
// decreases y.
enum DiscreteAction : int { kNoop = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4 };

inline constexpr int kSpriteSize = 6;   // all sprites are 6x6
inline constexpr int kTileSize = 8;     // background tile edge
inline constexpr int kNumDiscreteActions = 5;
inline constexpr float kContinuousActionBound = 3.0f;

struct EnvConfig {
    int height = 32;
    int width = 32;
    int n_distractors = 3;
    float distractor_speed = 1.0f;
    int agent_step = 2;
    ControlMode control_mode = ControlMode::Discrete5;
    uint64_t palette_seed = 0;
    bool goal_enabled = true;

    // Throws ConfigError when dimensions are not positive multiples of the
    // tile size, agent_step < 1, n_distractors < 0, or distractor_speed < 0.
    void validate() const;

    int tiles_x() const { return width / kTileSize; }
    int tiles_y() const { return height / kTileSize; }
    // One task per background tile; the goal sprite sits inside its tile.
    int num_tasks() const { return tiles_x() * tiles_y(); }
};

struct ActionValue {
    ControlMode mode = ControlMode::Discrete5;
    int discrete = kNoop;
    float dx = 0.0f;
    float dy = 0.0f;

    static ActionValue make_discrete(int index);
    static ActionValue make_continuous(float dx, float dy);
};

struct Distractor {
    float x = 0.0f;  // sprite top-left, sub-pixel
    float y = 0.0f;
    float vx = 0.0f;
    float vy = 0.0f;
    int color = 0;  // index into the distractor palette
};

struct EnvState {
    EnvConfig config;
    float agent_x = 0.0f;  // sprite top-left, sub-pixel
    float agent_y = 0.0f;
    std::vector<Distractor> distractors;
    std::vector<uint8_t> tile_colors;  // row-major tile grid, palette indices
    int goal_x = 0;                    // sprite top-left; valid iff goal_enabled
    int goal_y = 0;
    int task_id = 0;  // tile index of the goal; 0 when goal is disabled
    std::mt19937_64 rng;
    int64_t step_index = 0;
};

// Deterministic initial state for (config, seed): background tiles colored
// from palette_seed alone, goal placed on a seed-chosen tile, agent and
// distractors at non-overlapping integer positions, distractor velocities
// drawn from {-speed, 0, +speed}^2 \ {(0,0)} when speed > 0.
// Throws ConfigError when the sprites cannot be placed without overlap.
EnvState env_reset(const EnvConfig& config, uint64_t seed);

// Same, but pins the goal to the given task tile (0 .. num_tasks()-1).
// Throws UsageError for an out-of-range task or when the goal is disabled.
EnvState env_reset_task(const EnvConfig& config, uint64_t seed, int task_id);

// Advances one step: the agent moves by the action (clamped to the frame),
// every distractor advances by its velocity independent of the action,
// bouncing off borders. Returns the next state and whether the agent ended
// the step within L1 distance 2 of the goal (always false with the goal
// disabled). Throws UsageError when the action's mode does not match the
// config or its value is out of range.
std::pair<EnvState, bool> env_step(const EnvState& state, const ActionValue& action);

// Deterministic raster at integer pixel positions (sub-pixel coordinates are
// rounded). Draw order: background tiles, goal, distractors, agent on top.
RgbImage render(const EnvState& state);

// Exact per-pixel displacement between the two states: each pixel carries the
// displacement of the sprite that owns it in the first frame (topmost in draw
// order), background pixels carry (0,0). The field's priority plane holds the
// draw order, so warp() resolves collisions the same way render() does.
// Throws UsageError when the states' configs differ or the second state is
// not the immediate successor of the first.
FlowField oracle_flow(const EnvState& state, const EnvState& next_state);

// Binary mask of the agent sprite's pixels (the agent is drawn topmost, so
// its full 6x6 footprint is always visible).
Mask oracle_agent_mask(const EnvState& state);

// Greedy move toward the goal: picks the axis with the larger absolute gap
// (x on ties) and steps along it when doing so strictly reduces the gap;
// noop once within reach. Throws UsageError when the goal is disabled.
ActionValue scripted_expert(const EnvState& state);

// Uniform action: equiprobable over the 5 discrete actions, or uniform over
// [-3,3]^2 in continuous mode.
ActionValue random_action(ControlMode mode, std::mt19937_64& rng);

}  // namespace laof
