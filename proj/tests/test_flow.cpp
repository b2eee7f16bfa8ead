#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

#include "laof/errors.hpp"
#include "laof/flow.hpp"
#include "laof/image.hpp"

using laof::FlowField;
using laof::Hsv;
using laof::Mask;
using laof::RgbImage;

namespace {

// Gray image built from integer-frequency sinusoids, so a cyclic shift by
// whole pixels is exact. Frequencies are fixed pairs exciting both axes
// (randomly drawn frequencies can leave one axis nearly flat, and the
// smoothness term then shrinks that flow component toward zero); only the
// phases vary with the seed. Values stay well inside [0, 255].
RgbImage smooth_image(int H, int W, uint64_t seed, int shift_x, int shift_y) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979323846);
    const int k[4][2] = {{2, 1}, {1, 2}, {3, 2}, {2, 3}};
    double phi[4];
    for (auto& p : phi) p = phase(rng);
    RgbImage img(H, W);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double val = 128.0;
            for (int j = 0; j < 4; ++j) {
                val += 24.0 * std::sin(2.0 * 3.14159265358979323846 *
                                           (k[j][0] * double(x - shift_x) / W +
                                            k[j][1] * double(y - shift_y) / H) +
                                       phi[j]);
            }
            const auto u = static_cast<uint8_t>(std::lround(std::clamp(val, 0.0, 255.0)));
            img.at(y, x, 0) = u;
            img.at(y, x, 1) = u;
            img.at(y, x, 2) = u;
        }
    }
    return img;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

// ---------------------------------------------------------------------------
// flow -> RGB codec
// ---------------------------------------------------------------------------

TEST_CASE("codec: zero flow is black") {
    FlowField f(4, 4);
    RgbImage img = laof::flow_to_rgb(f, 0.01f);
    for (uint8_t b : img.data) CHECK(b == 0);
}

TEST_CASE("codec: unit rightward flow saturates to pure red at 64x64, sigma 0.01") {
    // sigma * sqrt(64^2 + 64^2) = 0.9051, so magnitude 1 clamps to 1.
    const float thresh = 0.01f * std::sqrt(64.0f * 64.0f + 64.0f * 64.0f);
    CHECK(thresh == doctest::Approx(0.9051f).epsilon(1e-4));
    FlowField f(64, 64);
    f.u_at(10, 10) = 1.0f;
    RgbImage img = laof::flow_to_rgb(f, 0.01f);
    CHECK(img.at(10, 10, 0) == 255);
    CHECK(img.at(10, 10, 1) == 0);
    CHECK(img.at(10, 10, 2) == 0);
}

TEST_CASE("codec: unit downward flow maps to hue 90") {
    Hsv h = laof::flow_pixel_to_hsv(0.0f, 1.0f, 0.01f, 64, 64);
    CHECK(h.h == doctest::Approx(90.0f));
    CHECK(h.s == doctest::Approx(1.0f));
    auto rgb = laof::hsv_to_rgb_u8(h);
    CHECK(rgb[0] == 128);
    CHECK(rgb[1] == 255);
    CHECK(rgb[2] == 0);
}

TEST_CASE("codec: scaling above the saturation threshold changes nothing") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<float> dir(-1.0f, 1.0f);
    FlowField a(32, 32), b(32, 32);
    const float thresh = 0.01f * std::sqrt(2.0f * 32.0f * 32.0f);
    for (size_t i = 0; i < a.u.size(); ++i) {
        float du = dir(rng), dv = dir(rng);
        const float m = std::sqrt(du * du + dv * dv);
        if (m < 1e-6f) {
            du = 1.0f;
            dv = 0.0f;
        }
        // Both fields exceed the clamp threshold; b is 3x longer than a.
        const float base = 2.0f * thresh / std::max(m, 1e-6f);
        a.u[i] = du * base;
        a.v[i] = dv * base;
        b.u[i] = du * base * 3.0f;
        b.v[i] = dv * base * 3.0f;
    }
    CHECK(laof::flow_to_rgb(a, 0.01f) == laof::flow_to_rgb(b, 0.01f));
}

TEST_CASE("codec: rotating flow by 90 degrees rotates hue by 90 pre-quantization") {
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<float> dir(-2.0f, 2.0f);
    for (int i = 0; i < 200; ++i) {
        const float u = dir(rng), v = dir(rng);
        if (std::fabs(u) + std::fabs(v) < 1e-3f) continue;
        Hsv base = laof::flow_pixel_to_hsv(u, v, 0.05f, 32, 32);
        Hsv rot = laof::flow_pixel_to_hsv(-v, u, 0.05f, 32, 32);
        CHECK(std::fmod(base.h + 90.0f, 360.0f) == doctest::Approx(rot.h).epsilon(1e-3));
        CHECK(base.s == doctest::Approx(rot.s));
        CHECK(base.v == doctest::Approx(rot.v));
    }
}

TEST_CASE("codec: non-finite flow and bad sigma are rejected") {
    FlowField f(2, 2);
    f.u[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(laof::flow_to_rgb(f, 0.01f), laof::NumericError);
    FlowField ok(2, 2);
    CHECK_THROWS_AS(laof::flow_to_rgb(ok, 0.0f), laof::UsageError);
}

// ---------------------------------------------------------------------------
// mask_flow
// ---------------------------------------------------------------------------

TEST_CASE("mask_flow: ones is identity, zeros is black, pixelwise matches a loop") {
    std::mt19937_64 rng(33);
    RgbImage img(8, 8);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng() & 0xFF);
    Mask ones(8, 8), zeros(8, 8), mixed(8, 8);
    for (auto& m : ones.data) m = 1;
    for (auto& m : mixed.data) m = static_cast<uint8_t>(rng() & 1);

    CHECK(laof::mask_flow(img, ones) == img);
    RgbImage black = laof::mask_flow(img, zeros);
    for (uint8_t b : black.data) CHECK(b == 0);

    RgbImage got = laof::mask_flow(img, mixed);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(got.at(y, x, c) == img.at(y, x, c) * mixed.at(y, x));

    // Idempotence.
    CHECK(laof::mask_flow(got, mixed) == got);

    Mask wrong(4, 8);
    CHECK_THROWS_AS(laof::mask_flow(img, wrong), laof::UsageError);
}

// ---------------------------------------------------------------------------
// Horn-Schunck
// ---------------------------------------------------------------------------

TEST_CASE("horn-schunck: identical frames give near-zero flow") {
    RgbImage img = smooth_image(32, 32, 41, 0, 0);
    FlowField f = laof::estimate_flow_hs(img, img, 1.0f, 50);
    for (size_t i = 0; i < f.u.size(); ++i) {
        CHECK(std::fabs(f.u[i]) < 1e-3f);
        CHECK(std::fabs(f.v[i]) < 1e-3f);
    }
}

TEST_CASE("horn-schunck: recovers global translations up to 2 px within 0.5 px mean EPE") {
    const int shifts[][2] = {{1, 0}, {0, 1}, {-1, 1}, {2, 0}, {0, -2}};
    for (const auto& s : shifts) {
        RgbImage img1 = smooth_image(64, 64, 42, 0, 0);
        RgbImage img2 = smooth_image(64, 64, 42, s[0], s[1]);
        FlowField f = laof::estimate_flow_hs(img1, img2, 1.0f, 200);
        double epe = 0.0;
        for (size_t i = 0; i < f.u.size(); ++i) {
            epe += std::sqrt((f.u[i] - s[0]) * (f.u[i] - s[0]) +
                             (f.v[i] - s[1]) * (f.v[i] - s[1]));
        }
        epe /= static_cast<double>(f.u.size());
        INFO("shift (", s[0], ",", s[1], ")");
        CHECK(epe < 0.5);
    }
}

TEST_CASE("horn-schunck: update magnitude settles over the last half of iterations") {
    RgbImage img1 = smooth_image(64, 64, 42, 0, 0);
    RgbImage img2 = smooth_image(64, 64, 42, 1, 0);
    std::vector<float> resid;
    laof::estimate_flow_hs(img1, img2, 1.0f, 200, &resid);
    REQUIRE(resid.size() == 200);
    for (size_t i = 100; i + 1 < resid.size(); ++i) {
        CHECK(resid[i + 1] <= resid[i] + 1e-6f);
    }
}

TEST_CASE("horn-schunck: invariant to a constant brightness offset") {
    RgbImage img1 = smooth_image(32, 32, 43, 0, 0);
    RgbImage img2 = smooth_image(32, 32, 43, 1, 0);
    RgbImage off1 = img1, off2 = img2;
    for (auto& b : off1.data) b = static_cast<uint8_t>(b + 20);
    for (auto& b : off2.data) b = static_cast<uint8_t>(b + 20);
    FlowField fa = laof::estimate_flow_hs(img1, img2, 1.0f, 100);
    FlowField fb = laof::estimate_flow_hs(off1, off2, 1.0f, 100);
    for (size_t i = 0; i < fa.u.size(); ++i) {
        CHECK(std::fabs(fa.u[i] - fb.u[i]) < 1e-3f);
        CHECK(std::fabs(fa.v[i] - fb.v[i]) < 1e-3f);
    }
}

TEST_CASE("horn-schunck: degenerate and invalid inputs are rejected") {
    RgbImage tiny(1, 1), ok(4, 4), other(4, 5);
    CHECK_THROWS_AS(laof::estimate_flow_hs(tiny, tiny, 1.0f, 10), laof::UsageError);
    CHECK_THROWS_AS(laof::estimate_flow_hs(ok, other, 1.0f, 10), laof::UsageError);
    CHECK_THROWS_AS(laof::estimate_flow_hs(ok, ok, 0.0f, 10), laof::UsageError);
    CHECK_THROWS_AS(laof::estimate_flow_hs(ok, ok, 1.0f, 0), laof::UsageError);
}

// ---------------------------------------------------------------------------
// warp
// ---------------------------------------------------------------------------

TEST_CASE("warp: zero flow is the identity") {
    std::mt19937_64 rng(51);
    RgbImage img(6, 6);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng() & 0xFF);
    CHECK(laof::warp(img, FlowField(6, 6)) == img);
}

TEST_CASE("warp: uniform (2,0) flow shifts content right by 2") {
    std::mt19937_64 rng(52);
    RgbImage img(4, 6);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng() & 0xFF);
    FlowField f(4, 6);
    for (auto& u : f.u) u = 2.0f;
    RgbImage out = laof::warp(img, f);
    for (int y = 0; y < 4; ++y)
        for (int x = 2; x < 6; ++x)
            for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == img.at(y, x - 2, c));
}

TEST_CASE("warp: collisions resolve by priority, else last writer") {
    RgbImage img(1, 3);
    img.at(0, 0, 0) = 10;  // A
    img.at(0, 1, 0) = 20;  // B
    img.at(0, 2, 0) = 30;  // C
    FlowField f(1, 3);
    f.u = {1.0f, 0.0f, 0.0f};  // A and B both land on x=1

    RgbImage last = laof::warp(img, f);
    CHECK(last.at(0, 1, 0) == 20);  // B written after A in scan order

    f.priority = {2, 1, 0};  // A drawn on top
    RgbImage prio = laof::warp(img, f);
    CHECK(prio.at(0, 1, 0) == 10);

    FlowField wrong(2, 2);
    CHECK_THROWS_AS(laof::warp(img, wrong), laof::UsageError);
}

// ---------------------------------------------------------------------------
// .flo interchange
// ---------------------------------------------------------------------------

TEST_CASE("flo: round-trip is bit identical") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<float> d(-10.0f, 10.0f);
    FlowField f(5, 7);
    for (auto& u : f.u) u = d(rng);
    for (auto& v : f.v) v = d(rng);
    const auto path = temp_file("laof_flow_rt.flo");
    laof::write_flo(f, path.string());
    FlowField g = laof::read_flo(path.string());
    CHECK(g.height == 5);
    CHECK(g.width == 7);
    CHECK(g.u == f.u);
    CHECK(g.v == f.v);
    std::filesystem::remove(path);
}

TEST_CASE("flo: 2x1 field occupies exactly 28 bytes") {
    FlowField f(1, 2);  // header 12 + 2 px * 2 ch * 4 bytes
    const auto path = temp_file("laof_flow_size.flo");
    laof::write_flo(f, path.string());
    CHECK(std::filesystem::file_size(path) == 28);
    std::filesystem::remove(path);
}

TEST_CASE("flo: wrong magic, truncation, and non-finite writes are rejected") {
    FlowField f(2, 2);
    const auto path = temp_file("laof_flow_bad.flo");
    laof::write_flo(f, path.string());

    auto rewrite = [&](auto mutate) {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        mutate(bytes);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };

    rewrite([](std::string& b) { b[0] = 0; });
    CHECK_THROWS_AS(laof::read_flo(path.string()), laof::FormatError);

    laof::write_flo(f, path.string());
    rewrite([](std::string& b) { b.resize(b.size() - 2); });
    CHECK_THROWS_AS(laof::read_flo(path.string()), laof::FormatError);

    FlowField bad(2, 2);
    bad.v[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(laof::write_flo(bad, path.string()), laof::NumericError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(laof::read_flo(path.string()), laof::StateError);
}
