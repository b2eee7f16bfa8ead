#pragma once

#include <cstdint>
#include <vector>

namespace laof {

/// Interleaved RGB, row-major, u8 per channel.
struct RgbImage {
    int height = 0, width = 0;
    std::vector<uint8_t> data;  // height * width * 3

    RgbImage() = default;
    RgbImage(int h, int w)
        : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0) {}

    uint8_t& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    const uint8_t& at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    bool same_shape(const RgbImage& o) const { return height == o.height && width == o.width; }
    bool operator==(const RgbImage& o) const {
        return height == o.height && width == o.width && data == o.data;
    }
};

/// Binary map, 1 on marked pixels.
struct Mask {
    int height = 0, width = 0;
    std::vector<uint8_t> data;  // height * width, values 0/1

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}

    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    const uint8_t& at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    int sum() const {
        int s = 0;
        for (uint8_t v : data) s += v;
        return s;
    }
};

}  // namespace laof
