#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "laof/env.hpp"
#include "laof/flow.hpp"
#include "laof/image.hpp"

namespace laof {

// One recorded step: consecutive frames of a single episode, the flow between
// exactly that pair (raw uv and the RGB training form), the agent mask of the
// first frame, and the action taken.
struct Transition {
    RgbImage obs;
    RgbImage next_obs;
    RgbImage flow_rgb;
    FlowField flow_uv;
    Mask mask;
    ActionValue action;
    int32_t task_id = 0;
    int32_t episode_id = 0;
    int32_t frame_index = 0;
};

struct DatasetManifest {
    std::string path;  // dataset directory
    int version = 1;
    EnvConfig env;
    int64_t n_transitions = 0;
    int64_t n_episodes = 0;
    std::vector<int32_t> train_episodes;
    std::vector<int32_t> test_episodes;
    std::vector<int32_t> task_ids;  // one per episode
    std::string flow_source;
    std::string policy;
    uint64_t seed = 0;
    std::vector<double> ratios;  // informational: ratios requested so far
};

// Everything except the transitions themselves; write_dataset derives counts
// and episode boundaries from the records.
struct DatasetMeta {
    EnvConfig env;
    std::string flow_source;
    std::string policy;
    uint64_t seed = 0;
    std::vector<int32_t> train_episodes;
    std::vector<int32_t> test_episodes;
};

// In-memory dataset: flat little-endian buffers mirroring the on-disk layout.
// Directory layout: manifest.json plus obs.bin (u8, N*2*H*W*3: both frames of
// each record), flow_rgb.bin (u8, N*H*W*3), flow_uv.bin (f32, N*H*W*2
// interleaved u,v), masks.bin (u8, N*H*W), actions.bin (u16 per record in
// discrete mode, 2*f32 in continuous mode), episodes.bin (u32 start offsets).
struct Dataset {
    DatasetManifest manifest;
    std::vector<uint8_t> obs;
    std::vector<uint8_t> flow_rgb;
    std::vector<float> flow_uv;
    std::vector<uint8_t> masks;
    std::vector<ActionValue> actions;
    std::vector<uint32_t> episode_starts;

    Transition get(int64_t i) const;            // materializes one record
    int32_t episode_of(int64_t i) const;        // episode owning transition i
    int32_t task_of(int64_t i) const;           // task of that episode
    // Transition ids belonging to the train (or test) episode split.
    std::vector<int64_t> split_ids(bool train) const;
};

// Writes the directory described above. Throws UsageError for an empty
// transition list, StateError when the directory cannot be created or a file
// cannot be written.
DatasetManifest write_dataset(const std::vector<Transition>& transitions,
                              const std::string& dir, const DatasetMeta& meta);

// Loads a dataset directory, validating every binary's length against the
// manifest counts. Throws StateError when the directory or manifest is
// missing, FormatError for malformed JSON or unknown fields, and
// CorruptionError (naming the file) for size mismatches.
Dataset read_dataset(const std::string& dir);

// Uniformly samples round(ratio * N_train) train-transition ids without
// replacement (labeled), deterministically for (dataset, ratio, seed); the
// remainder is unlabeled. Both lists come back sorted. Throws UsageError for
// ratio outside (0, 1].
std::pair<std::vector<int64_t>, std::vector<int64_t>> split_action_ratio(
    const Dataset& dataset, double ratio, uint64_t seed);

// One epoch = one full permutation of ids, deterministic per
// (shuffle_seed, epoch); the final partial batch is kept. Throws UsageError
// for empty ids or batch_size < 1.
std::vector<std::vector<int64_t>> epoch_batches(const std::vector<int64_t>& ids,
                                                int batch_size, uint64_t shuffle_seed,
                                                int64_t epoch);

}  // namespace laof
