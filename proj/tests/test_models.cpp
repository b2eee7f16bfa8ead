#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "laof/adam.hpp"
#include "laof/checkpoint.hpp"
#include "laof/env.hpp"
#include "laof/errors.hpp"
#include "laof/model.hpp"

using laof::EncoderSpec;
using laof::Graph;
using laof::LamConfig;
using laof::LamForward;
using laof::LamModel;
using laof::LatentMode;
using laof::RgbImage;
using laof::Tensor;
using laof::Variant;

namespace {

LamConfig small_config(Variant v = Variant::LAOF) {
    LamConfig c;
    c.variant = v;
    c.state_dim = 12;
    c.latent_dim = 4;
    c.hidden = 16;
    c.num_tasks = 3;
    c.task_embed_dim = 2;
    return c;
}

Tensor random_batch(int rows, int cols, uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Tensor::uniform({rows, cols}, rng, -1.0f, 1.0f);
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

TEST_CASE("encoder: 32x32 images map to 256 dims through orthonormal rows") {
    EncoderSpec enc = EncoderSpec::make(100);
    CHECK(enc.state_dim(32, 32) == 256);
    // Rows orthonormal within 1e-4.
    for (int r = 0; r < 16; ++r)
        for (int r2 = r; r2 < 16; ++r2) {
            double dot = 0.0;
            for (int c = 0; c < 192; ++c) dot += double(enc.proj.at(r, c)) * enc.proj.at(r2, c);
            CHECK(std::fabs(dot - (r == r2 ? 1.0 : 0.0)) < 1e-4);
        }

    RgbImage black(32, 32);
    Tensor s = laof::encode_visual(black, enc);
    REQUIRE(s.numel() == 256);
    for (float x : s.data) CHECK(x == 0.0f);

    // Same seed, same projection; different seed differs.
    EncoderSpec enc2 = EncoderSpec::make(100);
    CHECK(enc.proj.data == enc2.proj.data);
    CHECK(EncoderSpec::make(101).proj.data != enc.proj.data);

    RgbImage odd(24, 40);
    CHECK_NOTHROW(laof::encode_visual(odd, enc));
    CHECK_THROWS_AS(laof::encode_visual(RgbImage(30, 32), enc), laof::UsageError);
}

TEST_CASE("encoder: a one-patch edit only moves that patch's coordinates") {
    EncoderSpec enc = EncoderSpec::make(7);
    std::mt19937_64 rng(8);
    RgbImage img(32, 32);
    for (auto& b : img.data) b = static_cast<uint8_t>(rng() & 0xFF);
    RgbImage edited = img;
    edited.at(10, 19, 1) ^= 0x80;  // patch row 1, col 2 -> patch index 6

    Tensor a = laof::encode_visual(img, enc);
    Tensor b = laof::encode_visual(edited, enc);
    for (int i = 0; i < 256; ++i) {
        if (i >= 6 * 16 && i < 7 * 16) continue;
        CHECK(a.data[size_t(i)] == b.data[size_t(i)]);
    }
    bool changed = false;
    for (int i = 6 * 16; i < 7 * 16; ++i) changed = changed || a.data[size_t(i)] != b.data[size_t(i)];
    CHECK(changed);
}

// ---------------------------------------------------------------------------
// Wiring table
// ---------------------------------------------------------------------------

TEST_CASE("wiring table is total and matches the variant definitions") {
    struct Row {
        Variant v;
        bool idm, fdm, dual, flow_dec, flow_dec_state, flow_enc, pretrain_action;
    };
    const Row table[] = {
        {Variant::LAPO, true, true, false, false, false, false, false},
        {Variant::CoMo, true, true, false, false, false, false, false},
        {Variant::LAOF, true, true, false, true, false, false, false},
        {Variant::LAOFAction, true, true, false, true, false, false, true},
        {Variant::LAOMAction, true, true, false, false, false, false, true},
        {Variant::LAOFFlowFDM, true, true, true, false, false, false, false},
        {Variant::LAOFOnlyZ, true, false, false, true, false, false, false},
        {Variant::LAOFOnlyZS, true, false, false, true, true, false, false},
        {Variant::LAOFAE, false, false, false, true, false, true, false},
    };
    CHECK(std::size(table) == laof::all_variants().size());
    for (const Row& row : table) {
        LamModel m = laof::init_lam(small_config(row.v));
        INFO(laof::to_string(row.v));
        CHECK(m.uses_idm() == row.idm);
        CHECK(m.uses_fdm() == row.fdm);
        CHECK(m.fdm_dual_head() == row.dual);
        CHECK(m.uses_flow_decoder() == row.flow_dec);
        CHECK(m.flow_decoder_takes_state() == row.flow_dec_state);
        CHECK(m.uses_flow_encoder() == row.flow_enc);
        CHECK(m.pretrain_uses_action_decoder() == row.pretrain_action);

        CHECK(m.component_params("idm").empty() == !row.idm);
        CHECK(m.component_params("fdm").empty() == !row.fdm);
        CHECK(m.component_params("flow_dec").empty() == !row.flow_dec);
        CHECK(m.component_params("flow_enc").empty() == !row.flow_enc);
        // Fine-tuning and distillation heads exist for every variant.
        CHECK(m.component_params("action_dec").size() == 6);
        CHECK(m.component_params("policy").size() == 7);  // 6 + task embedding
        // The frozen encoder never appears among trainables.
        CHECK(m.component_params("encoder").empty());

        // Absent components reject calls.
        LamForward f(m);
        auto s = f.input(random_batch(2, 12, 1));
        auto z = f.input(random_batch(2, 4, 2));
        if (!row.idm) CHECK_THROWS_AS(f.idm(s, s), laof::UsageError);
        if (!row.fdm) CHECK_THROWS_AS(f.fdm(s, z), laof::UsageError);
        if (!row.flow_dec) CHECK_THROWS_AS(f.flow_decode(z), laof::UsageError);
        if (!row.flow_enc) CHECK_THROWS_AS(f.flow_encode(s), laof::UsageError);
        if (row.flow_dec && row.flow_dec_state) CHECK_THROWS_AS(f.flow_decode(z), laof::UsageError);
        if (row.flow_dec && !row.flow_dec_state)
            CHECK_THROWS_AS(f.flow_decode(z, s), laof::UsageError);
    }
}

TEST_CASE("head shapes follow the config dimensions") {
    LamModel m = laof::init_lam(small_config(Variant::LAOF));
    LamForward f(m);
    auto s = f.input(random_batch(3, 12, 5));
    auto s2 = f.input(random_batch(3, 12, 6));
    auto z = f.idm(s, s2);
    CHECK(f.graph().value(z).shape == std::vector<int>{3, 4});
    auto fdm = f.fdm(s, z);
    CHECK(f.graph().value(fdm.state).shape == std::vector<int>{3, 12});
    CHECK(!fdm.flow_head.has_value());
    auto fl = f.flow_decode(z);
    CHECK(f.graph().value(fl).shape == std::vector<int>{3, 12});
    auto act = f.action_decode(z);
    CHECK(f.graph().value(act).shape == std::vector<int>{3, 5});
    auto pol = f.policy(s, {0, 2, 1});
    CHECK(f.graph().value(pol).shape == std::vector<int>{3, 4});
    CHECK_THROWS_AS(f.policy(s, {0, 3, 1}), laof::UsageError);
    CHECK_THROWS_AS(f.param("flow_enc.w1"), laof::UsageError);

    LamConfig cc = small_config(Variant::LAOFFlowFDM);
    LamModel md = laof::init_lam(cc);
    LamForward fd(md);
    auto sd = fd.input(random_batch(2, 12, 7));
    auto zd = fd.input(random_batch(2, 4, 8));
    auto dual = fd.fdm(sd, zd);
    CHECK(fd.graph().value(dual.state).shape == std::vector<int>{2, 12});
    REQUIRE(dual.flow_head.has_value());
    CHECK(fd.graph().value(*dual.flow_head).shape == std::vector<int>{2, 12});

    LamConfig cont = small_config();
    cont.control_mode = laof::ControlMode::Continuous2d;
    LamModel mc = laof::init_lam(cont);
    LamForward fc(mc);
    auto zc = fc.input(random_batch(2, 4, 9));
    CHECK(fc.graph().value(fc.action_decode(zc)).shape == std::vector<int>{2, 2});
}

TEST_CASE("como feeds the frame difference into the second input slot") {
    LamModel m = laof::init_lam(small_config(Variant::CoMo));
    Tensor sa = random_batch(2, 12, 11), sb = random_batch(2, 12, 12);

    LamForward f(m);
    auto z = f.idm(f.input(sa), f.input(sb));
    Tensor via_op = f.graph().value(z);

    // Manual composition with the same parameters: concat(s, s' - s).
    Tensor manual;
    {
        LamForward h(m);
        auto& gr = h.graph();
        auto x = gr.concat(h.input(sa), gr.sub(h.input(sb), h.input(sa)), 1);
        auto h1 = gr.tanh_op(gr.add(gr.matmul(x, h.param("idm.w1")), h.param("idm.b1")));
        auto h2 = gr.tanh_op(gr.add(gr.matmul(h1, h.param("idm.w2")), h.param("idm.b2")));
        manual = gr.value(gr.add(gr.matmul(h2, h.param("idm.w3")), h.param("idm.b3")));
    }
    CHECK(via_op.data == manual.data);

    // idm(s, s) sees a zero difference: equal to feeding s' = s explicitly.
    LamForward f2(m);
    Tensor self = f2.graph().value(f2.idm(f2.input(sa), f2.input(sa)));
    LamForward f3(m);
    auto& g3 = f3.graph();
    auto zero = f3.input(Tensor::zeros({2, 12}));
    auto x3 = g3.concat(f3.input(sa), zero, 1);
    auto h13 = g3.tanh_op(g3.add(g3.matmul(x3, f3.param("idm.w1")), f3.param("idm.b1")));
    auto h23 = g3.tanh_op(g3.add(g3.matmul(h13, f3.param("idm.w2")), f3.param("idm.b2")));
    Tensor explicit_zero = g3.value(g3.add(g3.matmul(h23, f3.param("idm.w3")), f3.param("idm.b3")));
    CHECK(self.data == explicit_zero.data);
}

// ---------------------------------------------------------------------------
// Quantizer
// ---------------------------------------------------------------------------

TEST_CASE("quantize: exact row, tie to lowest index, losses vanish on a codebook row") {
    LamConfig cfg = small_config();
    cfg.latent_mode = LatentMode::Discrete;
    cfg.codebook_size = 8;
    LamModel m = laof::init_lam(cfg);

    // z equal to codebook row 3 -> index 3, zero losses, output row bit-exact.
    const Tensor& cb = m.params.at("quantizer.codebook");
    Tensor z = Tensor::zeros({1, 4});
    for (int j = 0; j < 4; ++j) z.at(0, j) = cb.at(3, j);
    LamForward f(m);
    auto q = f.quantize_latent(f.input(z));
    CHECK(q.indices == std::vector<int>{3});
    for (int j = 0; j < 4; ++j) CHECK(f.graph().value(q.z_q).at(0, j) == cb.at(3, j));
    CHECK(f.graph().value(q.codebook_loss).data[0] == 0.0f);
    CHECK(f.graph().value(q.commitment_loss).data[0] == 0.0f);

    // Equidistant between rows 0 and 1 -> index 0.
    LamModel tie = laof::init_lam(cfg);
    Tensor& tcb = tie.params.at("quantizer.codebook");
    for (float& x : tcb.data) x = 9.0f;  // park every row far from the query
    for (int j = 0; j < 4; ++j) {
        tcb.at(0, j) = j == 0 ? 1.0f : 0.0f;
        tcb.at(1, j) = j == 0 ? -1.0f : 0.0f;
    }
    LamForward ft(tie);
    auto qt = ft.quantize_latent(ft.input(Tensor::zeros({1, 4})));
    CHECK(qt.indices[0] < 2);  // one of the two nearest
    CHECK(qt.indices == std::vector<int>{0});

    // Continuous-mode models refuse to quantize.
    LamModel cont = laof::init_lam(small_config());
    LamForward fcont(cont);
    CHECK_THROWS_AS(fcont.quantize_latent(fcont.input(Tensor::zeros({1, 4}))), laof::UsageError);
}

TEST_CASE("quantize: matches an exhaustive scan on 1000 random latents") {
    LamConfig cfg;
    cfg.variant = Variant::LAPO;
    cfg.latent_mode = LatentMode::Discrete;
    cfg.state_dim = 8;
    cfg.latent_dim = 6;
    cfg.hidden = 8;
    cfg.codebook_size = 64;
    LamModel m = laof::init_lam(cfg);
    const Tensor& cb = m.params.at("quantizer.codebook");

    std::mt19937_64 rng(17);
    Tensor z = Tensor::uniform({1000, 6}, rng, -0.05f, 0.05f);
    LamForward f(m);
    auto q = f.quantize_latent(f.input(z));
    for (int b = 0; b < 1000; ++b) {
        int best = 0;
        double bestd = 1e300;
        for (int c = 0; c < 64; ++c) {
            double d2 = 0.0;
            for (int j = 0; j < 6; ++j) {
                const double dj = double(z.at(b, j)) - double(cb.at(c, j));
                d2 += dj * dj;
            }
            if (d2 < bestd) {
                bestd = d2;
                best = c;
            }
        }
        CHECK(q.indices[size_t(b)] == best);
        // Output row equality, bit for bit.
        for (int j = 0; j < 6; ++j) CHECK(f.graph().value(q.z_q).at(b, j) == cb.at(best, j));
    }
}

TEST_CASE("quantize: straight-through gradient and codebook-loss routing") {
    LamConfig cfg = small_config();
    cfg.latent_mode = LatentMode::Discrete;
    cfg.codebook_size = 4;
    LamModel m = laof::init_lam(cfg);
    Tensor z = random_batch(3, 4, 23);
    z.requires_grad = true;

    // Loss using z_q only: gradient reaches z (identity) but not the codebook.
    {
        LamForward f(m);
        auto zl = f.graph().leaf(z);
        auto q = f.quantize_latent(zl);
        auto target = f.input(Tensor::zeros({3, 4}));
        f.graph().backward(f.graph().mse(q.z_q, target));
        // d mse/d z_q = 2 (z_q - 0) / 12, routed to z unchanged.
        const Tensor& zq_rows = m.params.at("quantizer.codebook");
        for (int b = 0; b < 3; ++b)
            for (int j = 0; j < 4; ++j) {
                const float expect = 2.0f * zq_rows.at(q.indices[size_t(b)], j) / 12.0f;
                CHECK(f.graph().grad(zl).at(b, j) == doctest::Approx(expect));
            }
        CHECK_FALSE(f.has_grad("quantizer.codebook"));
    }
    // Codebook loss: gradient reaches the codebook but not z.
    {
        LamForward f(m);
        auto zl = f.graph().leaf(z);
        auto q = f.quantize_latent(zl);
        f.graph().backward(q.codebook_loss);
        CHECK(f.has_grad("quantizer.codebook"));
        const Tensor& gz = f.graph().grad(zl);
        for (float x : gz.data) CHECK(x == 0.0f);
    }
    // Commitment loss: the reverse.
    {
        LamForward f(m);
        auto zl = f.graph().leaf(z);
        auto q = f.quantize_latent(zl);
        f.graph().backward(q.commitment_loss);
        CHECK_FALSE(f.has_grad("quantizer.codebook"));
        bool any = false;
        for (float x : f.graph().grad(zl).data) any = any || x != 0.0f;
        CHECK(any);
    }
}

// ---------------------------------------------------------------------------
// Policy, freezing, persistence
// ---------------------------------------------------------------------------

TEST_CASE("policy output depends on the task id") {
    LamModel m = laof::init_lam(small_config());
    Tensor s = random_batch(1, 12, 31);
    LamForward f(m);
    auto a = f.policy(f.input(s), {0});
    auto b = f.policy(f.input(s), {1});
    CHECK(f.graph().value(a).data != f.graph().value(b).data);
}

TEST_CASE("training a head leaves the frozen encoder untouched") {
    LamModel m = laof::init_lam(small_config());
    const Tensor before = m.encoder.proj;
    laof::Adam opt({.lr = 1e-2f});
    for (int step = 0; step < 3; ++step) {
        LamForward f(m);
        auto s = f.input(random_batch(4, 12, 41 + uint64_t(step)));
        auto s2 = f.input(random_batch(4, 12, 51 + uint64_t(step)));
        auto z = f.idm(s, s2);
        auto pred = f.fdm(s, z);
        f.graph().backward(f.graph().mse(pred.state, s2));
        for (const auto& name : m.component_params("idm")) {
            opt.step(name, m.params[name], f.grad(name));
        }
    }
    CHECK(m.encoder.proj.data == before.data);  // bit-identical after training
}

TEST_CASE("model parameters round-trip through checkpoints") {
    LamModel m = laof::init_lam(small_config(Variant::LAOFAction));
    const auto path = std::string("/tmp/laof_model_ckpt.bin");
    laof::save_checkpoint(path, m.params);
    laof::ParamMap loaded = laof::load_checkpoint(path);
    REQUIRE(loaded.size() == m.params.size());
    for (const auto& [name, tensor] : m.params) {
        REQUIRE(loaded.count(name) == 1);
        CHECK(loaded.at(name).shape == tensor.shape);
        CHECK(loaded.at(name).data == tensor.data);
    }
    std::remove(path.c_str());
}
