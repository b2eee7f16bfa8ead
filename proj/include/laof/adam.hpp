#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "laof/tensor.hpp"

namespace laof {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Adam with bias correction. Each named parameter gets its own moment
/// buffers and step counter, so interleaving updates of disjoint parameter
/// groups (e.g. alternating objectives) never perturbs the groups that sat
/// out a sub-step.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    /// Apply one update to `param` in place. Returns false and leaves both the
    /// parameter and the optimizer state untouched if `grad` has any
    /// non-finite entry.
    bool step(const std::string& name, Tensor& param, const Tensor& grad);

    void set_lr(float lr) { cfg_.lr = lr; }
    float lr() const { return cfg_.lr; }

    /// Number of accepted updates for a parameter (0 if never stepped).
    int64_t step_count(const std::string& name) const;

private:
    struct Slot {
        std::vector<float> m, v;
        int64_t t = 0;
    };
    AdamConfig cfg_;
    std::unordered_map<std::string, Slot> slots_;
};

}  // namespace laof
