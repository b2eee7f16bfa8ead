#include "laof/adam.hpp"

#include <cmath>

#include "laof/errors.hpp"

namespace laof {

bool Adam::step(const std::string& name, Tensor& param, const Tensor& grad) {
    if (!param.same_shape(grad)) {
        throw ShapeError("adam: grad shape " + grad.shape_str() + " does not match param " +
                         name + " " + param.shape_str());
    }
    if (!all_finite(grad)) return false;

    Slot& s = slots_[name];
    const size_t n = param.data.size();
    if (s.m.empty()) {
        s.m.assign(n, 0.0f);
        s.v.assign(n, 0.0f);
    } else if (s.m.size() != n) {
        throw StateError("adam: parameter " + name + " changed size");
    }

    s.t += 1;
    const float b1 = cfg_.beta1, b2 = cfg_.beta2;
    const float bc1 = 1.0f - std::pow(b1, static_cast<float>(s.t));
    const float bc2 = 1.0f - std::pow(b2, static_cast<float>(s.t));
    for (size_t i = 0; i < n; ++i) {
        const float g = grad.data[i];
        s.m[i] = b1 * s.m[i] + (1.0f - b1) * g;
        s.v[i] = b2 * s.v[i] + (1.0f - b2) * g * g;
        const float mhat = s.m[i] / bc1;
        const float vhat = s.v[i] / bc2;
        param.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    return true;
}

int64_t Adam::step_count(const std::string& name) const {
    auto it = slots_.find(name);
    return it == slots_.end() ? 0 : it->second.t;
}

}  // namespace laof
