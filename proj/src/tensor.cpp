#include "laof/tensor.hpp"

#include <cmath>
#include <sstream>

#include "laof/errors.hpp"

namespace laof {

static int64_t product(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extent must be positive, got " + std::to_string(e));
        n *= e;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape_, std::vector<float> data_, bool requires_grad_)
    : shape(std::move(shape_)), data(std::move(data_)), requires_grad(requires_grad_) {
    if (product(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(shape));
    }
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    int64_t n = product(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    int64_t n = product(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<size_t>(n), value), requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng, float stddev, bool requires_grad) {
    int64_t n = product(shape);
    std::normal_distribution<float> dist(0.0f, stddev);
    std::vector<float> data(static_cast<size_t>(n));
    for (auto& x : data) x = dist(rng);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::uniform(std::vector<int> shape, std::mt19937_64& rng, float lo, float hi,
                       bool requires_grad) {
    int64_t n = product(shape);
    std::uniform_real_distribution<float> dist(lo, hi);
    std::vector<float> data(static_cast<size_t>(n));
    for (auto& x : data) x = dist(rng);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::row(std::vector<float> values, bool requires_grad) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values), requires_grad);
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

bool all_finite(const float* p, size_t n) {
    // A single accumulation of |x| turns any NaN/Inf into a non-finite sum.
    // Magnitudes in this codebase stay far below float overflow.
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i) acc += std::fabs(p[i]);
    return std::isfinite(acc);
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace laof
