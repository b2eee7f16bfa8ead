#include "laof/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "laof/errors.hpp"
#include "laof/tensor.hpp"

namespace laof {

namespace {

constexpr float kFloMagic = 202021.25f;
constexpr float kPi = 3.14159265358979323846f;

float luma(const RgbImage& img, int y, int x) {
    return 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
}

}  // namespace

Hsv flow_pixel_to_hsv(float u, float v, float sigma, int height, int width) {
    Hsv out;
    const float m = std::sqrt(u * u + v * v);
    const float diag = std::sqrt(static_cast<float>(height) * height +
                                 static_cast<float>(width) * width);
    const float m_norm = std::min(1.0f, m / (sigma * diag));
    float deg = std::atan2(v, u) * (180.0f / kPi);
    if (deg < 0.0f) deg += 360.0f;
    if (deg >= 360.0f) deg = 0.0f;
    out.h = deg;
    out.s = m_norm;
    out.v = m_norm;
    return out;
}

std::array<uint8_t, 3> hsv_to_rgb_u8(const Hsv& hsv) {
    const float c = hsv.v * hsv.s;
    const float hp = hsv.h / 60.0f;
    const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
    float r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;  // [300, 360)
    }
    const float m = hsv.v - c;
    auto quant = [&](float f) {
        return static_cast<uint8_t>(std::floor((f + m) * 255.0f + 0.5f));
    };
    return {quant(r), quant(g), quant(b)};
}

RgbImage flow_to_rgb(const FlowField& flow, float sigma) {
    if (sigma <= 0.0f) throw UsageError("flow_to_rgb: sigma must be positive");
    if (!all_finite(flow.u.data(), flow.u.size()) || !all_finite(flow.v.data(), flow.v.size())) {
        throw NumericError("flow_to_rgb: non-finite flow");
    }
    RgbImage out(flow.height, flow.width);
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            const auto rgb = hsv_to_rgb_u8(
                flow_pixel_to_hsv(flow.u_at(y, x), flow.v_at(y, x), sigma, flow.height, flow.width));
            out.at(y, x, 0) = rgb[0];
            out.at(y, x, 1) = rgb[1];
            out.at(y, x, 2) = rgb[2];
        }
    }
    return out;
}

RgbImage mask_flow(const RgbImage& flow_rgb, const Mask& mask) {
    if (mask.height != flow_rgb.height || mask.width != flow_rgb.width) {
        throw UsageError("mask_flow: mask dimensions do not match the flow image");
    }
    RgbImage out = flow_rgb;
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            if (!mask.at(y, x)) {
                out.at(y, x, 0) = 0;
                out.at(y, x, 1) = 0;
                out.at(y, x, 2) = 0;
            }
        }
    }
    return out;
}

FlowField estimate_flow_hs(const RgbImage& img1, const RgbImage& img2, float alpha_hs,
                           int iterations, std::vector<float>* residuals) {
    if (!img1.same_shape(img2)) throw UsageError("estimate_flow_hs: frame dimensions differ");
    if (img1.height < 2 || img1.width < 2) {
        throw UsageError("estimate_flow_hs: images must be at least 2x2");
    }
    if (alpha_hs <= 0.0f || iterations < 1) {
        throw UsageError("estimate_flow_hs: alpha_hs must be > 0 and iterations >= 1");
    }
    const int H = img1.height, W = img1.width;
    const size_t n = static_cast<size_t>(H) * W;

    // Derivatives from the classic 2x2 stencils, averaged over both frames;
    // indices clamp at the right/bottom edges.
    std::vector<float> Ix(n), Iy(n), It(n);
    auto l1 = [&](int y, int x) { return luma(img1, std::min(y, H - 1), std::min(x, W - 1)); };
    auto l2 = [&](int y, int x) { return luma(img2, std::min(y, H - 1), std::min(x, W - 1)); };
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const size_t i = static_cast<size_t>(y) * W + x;
            Ix[i] = 0.25f * (l1(y, x + 1) - l1(y, x) + l1(y + 1, x + 1) - l1(y + 1, x) +
                             l2(y, x + 1) - l2(y, x) + l2(y + 1, x + 1) - l2(y + 1, x));
            Iy[i] = 0.25f * (l1(y + 1, x) - l1(y, x) + l1(y + 1, x + 1) - l1(y, x + 1) +
                             l2(y + 1, x) - l2(y, x) + l2(y + 1, x + 1) - l2(y, x + 1));
            It[i] = 0.25f * (l2(y, x) - l1(y, x) + l2(y, x + 1) - l1(y, x + 1) +
                             l2(y + 1, x) - l1(y + 1, x) + l2(y + 1, x + 1) - l1(y + 1, x + 1));
        }
    }

    FlowField flow(H, W);
    std::vector<float> un(n), vn(n);
    const float a2 = alpha_hs * alpha_hs;
    if (residuals) {
        residuals->clear();
        residuals->reserve(static_cast<size_t>(iterations));
    }
    for (int it = 0; it < iterations; ++it) {
        double resid = 0.0;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const size_t i = static_cast<size_t>(y) * W + x;
                // Weighted neighborhood average: 1/6 edges, 1/12 corners,
                // with border replication.
                auto uu = [&](int yy, int xx) {
                    return flow.u[static_cast<size_t>(std::clamp(yy, 0, H - 1)) * W +
                                  std::clamp(xx, 0, W - 1)];
                };
                auto vv = [&](int yy, int xx) {
                    return flow.v[static_cast<size_t>(std::clamp(yy, 0, H - 1)) * W +
                                  std::clamp(xx, 0, W - 1)];
                };
                const float ubar =
                    (uu(y - 1, x) + uu(y + 1, x) + uu(y, x - 1) + uu(y, x + 1)) / 6.0f +
                    (uu(y - 1, x - 1) + uu(y - 1, x + 1) + uu(y + 1, x - 1) + uu(y + 1, x + 1)) /
                        12.0f;
                const float vbar =
                    (vv(y - 1, x) + vv(y + 1, x) + vv(y, x - 1) + vv(y, x + 1)) / 6.0f +
                    (vv(y - 1, x - 1) + vv(y - 1, x + 1) + vv(y + 1, x - 1) + vv(y + 1, x + 1)) /
                        12.0f;
                const float t = (Ix[i] * ubar + Iy[i] * vbar + It[i]) /
                                (a2 + Ix[i] * Ix[i] + Iy[i] * Iy[i]);
                un[i] = ubar - Ix[i] * t;
                vn[i] = vbar - Iy[i] * t;
                resid += std::fabs(un[i] - flow.u[i]) + std::fabs(vn[i] - flow.v[i]);
            }
        }
        flow.u.swap(un);
        flow.v.swap(vn);
        if (residuals) residuals->push_back(static_cast<float>(resid / static_cast<double>(n)));
    }
    return flow;
}

RgbImage warp(const RgbImage& image, const FlowField& flow) {
    if (flow.height != image.height || flow.width != image.width) {
        throw UsageError("warp: flow dimensions do not match the image");
    }
    RgbImage out = image;  // uncovered targets keep the source value
    std::vector<int16_t> best(static_cast<size_t>(image.height) * image.width,
                              std::numeric_limits<int16_t>::min());
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const size_t i = flow.idx(y, x);
            const int tx = x + static_cast<int>(std::lround(flow.u[i]));
            const int ty = y + static_cast<int>(std::lround(flow.v[i]));
            if (tx < 0 || tx >= image.width || ty < 0 || ty >= image.height) continue;
            const int16_t pr = flow.has_priority() ? flow.priority[i] : int16_t{0};
            const size_t ti = flow.idx(ty, tx);
            if (pr >= best[ti]) {
                best[ti] = pr;
                out.at(ty, tx, 0) = image.at(y, x, 0);
                out.at(ty, tx, 1) = image.at(y, x, 1);
                out.at(ty, tx, 2) = image.at(y, x, 2);
            }
        }
    }
    return out;
}

void write_flo(const FlowField& flow, const std::string& path) {
    if (!all_finite(flow.u.data(), flow.u.size()) || !all_finite(flow.v.data(), flow.v.size())) {
        throw NumericError("write_flo: non-finite flow");
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw StateError("cannot open for writing: " + path);
    const float magic = kFloMagic;
    const int32_t w = flow.width, h = flow.height;
    os.write(reinterpret_cast<const char*>(&magic), 4);
    os.write(reinterpret_cast<const char*>(&w), 4);
    os.write(reinterpret_cast<const char*>(&h), 4);
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            os.write(reinterpret_cast<const char*>(&flow.u_at(y, x)), 4);
            os.write(reinterpret_cast<const char*>(&flow.v_at(y, x)), 4);
        }
    }
    if (!os) throw StateError("write failed: " + path);
}

FlowField read_flo(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StateError("cannot open for reading: " + path);
    float magic = 0;
    int32_t w = 0, h = 0;
    is.read(reinterpret_cast<char*>(&magic), 4);
    if (!is || magic != kFloMagic) throw FormatError("not a .flo file: " + path);
    is.read(reinterpret_cast<char*>(&w), 4);
    is.read(reinterpret_cast<char*>(&h), 4);
    if (!is || w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) {
        throw FormatError("implausible .flo dimensions in " + path);
    }
    FlowField flow(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            is.read(reinterpret_cast<char*>(&flow.u_at(y, x)), 4);
            is.read(reinterpret_cast<char*>(&flow.v_at(y, x)), 4);
        }
    }
    if (!is) throw FormatError("truncated .flo file: " + path);
    is.peek();
    if (!is.eof()) throw FormatError("trailing bytes in .flo file: " + path);
    return flow;
}

}  // namespace laof
