#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace laof {

/// Dense row-major float32 array. Shapes are small (rank 1 or 2 in practice);
/// product(shape) always equals data.size().
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<float> data_, bool requires_grad_ = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, std::mt19937_64& rng, float stddev,
                        bool requires_grad = false);
    static Tensor uniform(std::vector<int> shape, std::mt19937_64& rng, float lo, float hi,
                          bool requires_grad = false);
    static Tensor row(std::vector<float> values, bool requires_grad = false);

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int extent(int axis) const { return shape[static_cast<size_t>(axis)]; }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // rank-2 accessors
    float& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    const float& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    std::string shape_str() const;
};

/// True when every element is finite. One vectorizable pass.
bool all_finite(const float* p, size_t n);
inline bool all_finite(const Tensor& t) { return all_finite(t.data.data(), t.data.size()); }

std::string shape_to_string(const std::vector<int>& shape);

}  // namespace laof
