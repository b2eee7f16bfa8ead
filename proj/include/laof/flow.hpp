#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "laof/image.hpp"

namespace laof {

/// Dense per-pixel displacement field. (u, v) is the motion of the pixel from
/// this frame to the next: horizontal (positive right) and vertical (positive
/// down). `priority` is optional provenance: when present, it ranks pixels by
/// draw order (higher = drawn on top) so forward warping can resolve
/// collisions the same way the renderer resolves occlusion.
struct FlowField {
    int height = 0, width = 0;
    std::vector<float> u, v;         // height * width each
    std::vector<int16_t> priority;   // empty, or height * width

    FlowField() = default;
    FlowField(int h, int w)
        : height(h),
          width(w),
          u(static_cast<size_t>(h) * w, 0.0f),
          v(static_cast<size_t>(h) * w, 0.0f) {}

    size_t idx(int y, int x) const { return static_cast<size_t>(y) * width + x; }
    float& u_at(int y, int x) { return u[idx(y, x)]; }
    float& v_at(int y, int x) { return v[idx(y, x)]; }
    const float& u_at(int y, int x) const { return u[idx(y, x)]; }
    const float& v_at(int y, int x) const { return v[idx(y, x)]; }
    bool has_priority() const { return !priority.empty(); }
};

/// Hue in degrees [0, 360), saturation and value in [0, 1].
struct Hsv {
    float h = 0, s = 0, v = 0;
};

/// Codec for one flow vector: hue = atan2(v, u); magnitude normalized by
/// sigma * sqrt(H^2 + W^2) and clamped to 1 feeds both saturation and value.
Hsv flow_pixel_to_hsv(float u, float v, float sigma, int height, int width);

/// Standard sector HSV -> RGB conversion, round-half-up to u8.
std::array<uint8_t, 3> hsv_to_rgb_u8(const Hsv& hsv);

/// Render a flow field as an RGB image via the codec above.
RgbImage flow_to_rgb(const FlowField& flow, float sigma);

/// Keep flow colors only where mask is 1; black elsewhere.
RgbImage mask_flow(const RgbImage& flow_rgb, const Mask& mask);

/// Dense Horn-Schunck estimation between two RGB frames (internally on luma).
/// Jacobi iterations; if `residuals` is given it receives the mean update
/// magnitude of every iteration.
FlowField estimate_flow_hs(const RgbImage& img1, const RgbImage& img2, float alpha_hs,
                           int iterations, std::vector<float>* residuals = nullptr);

/// Forward-warp: every source pixel lands at its flow target (nearest
/// integer). Uncovered pixels keep the source value. Collisions go by flow
/// provenance priority when available, else last writer in scan order.
RgbImage warp(const RgbImage& image, const FlowField& flow);

/// Middlebury .flo interchange: f32 magic 202021.25, i32 width, i32 height,
/// then row-major interleaved (u, v) f32 pairs, all little-endian.
void write_flo(const FlowField& flow, const std::string& path);
FlowField read_flo(const std::string& path);

}  // namespace laof
