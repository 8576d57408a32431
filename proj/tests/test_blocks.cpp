#include <cmath>

#include "doctest.h"
#include "dsc/nn/blocks.hpp"
#include "testutil.hpp"

using namespace dsc;
using namespace dsc::nn;
using dsc::testutil::random_positive;
using dsc::testutil::random_tensor;

namespace {

void zero_params(ParamStore& ps) {
    for (std::size_t i = 0; i < ps.size(); ++i) ps.at(i).value.fill(0.0);
}

double tensor_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return std::sqrt(s);
}

}  // namespace

TEST_SUITE("blocks") {

TEST_CASE("conv_block") {
    Rng rng(1);
    RunCtx infer;

    SUBCASE("shape contract: (16,16,2) with 8 filters -> (16,16,8)") {
        ParamStore ps;
        BlockConfig cfg;
        cfg.filters = 8;
        auto p = make_conv_block(ps, "b", 2, cfg, rng);
        Tape t;
        NodeId y = conv_block(t, t.constant(random_tensor({16, 16, 2}, rng)), p, infer);
        CHECK(t.val(y).shape == std::vector<int>{16, 16, 8});
    }

    SUBCASE("identity stencils pass nonnegative input through") {
        ParamStore ps;
        BlockConfig cfg;
        cfg.filters = 2;
        auto p = make_conv_block(ps, "b", 2, cfg, rng);
        // Centered identity stencil on both layers: out channel c reads
        // input channel c at the window center.
        for (Param* w : {p.c1.w, p.c2.w}) {
            w->value.fill(0.0);
            for (int c = 0; c < 2; ++c) w->value.at(1, 1, c, c) = 1.0;
        }
        p.c1.b->value.fill(0.0);
        p.c2.b->value.fill(0.0);
        Tensor in = random_positive({6, 6, 2}, rng);
        Tape t;
        NodeId y = conv_block(t, t.constant(in), p, infer);
        for (std::int64_t i = 0; i < in.numel(); ++i)
            CHECK(t.val(y)[i] == doctest::Approx(in[i]).epsilon(1e-12));
    }

    SUBCASE("dropout is disabled at inference") {
        ParamStore ps;
        BlockConfig cfg;
        cfg.filters = 4;
        cfg.dropout_rate = 0.5;
        auto p = make_conv_block(ps, "b", 2, cfg, rng);
        Tensor in = random_tensor({5, 5, 2}, rng);
        Tape t1, t2;
        NodeId y1 = conv_block(t1, t1.constant(in), p, infer);
        NodeId y2 = conv_block(t2, t2.constant(in), p, infer);
        CHECK(t1.val(y1).data == t2.val(y2).data);
    }

    SUBCASE("rank-4 input points to the recurrent variant") {
        ParamStore ps;
        BlockConfig cfg;
        auto p = make_conv_block(ps, "b", 2, cfg, rng);
        Tape t;
        NodeId rank4 = t.constant(Tensor({2, 4, 4, 2}));
        CHECK_THROWS_WITH(static_cast<void>(conv_block(t, rank4, p, infer)),
                          "use recurrent variant");
    }

    SUBCASE("normalization options keep shape and stay finite") {
        for (NormKind kind : {NormKind::Batch, NormKind::Layer}) {
            ParamStore ps;
            BlockConfig cfg;
            cfg.filters = 4;
            cfg.normalization = kind;
            auto p = make_conv_block(ps, "b", 3, cfg, rng);
            Tape t;
            NodeId y = conv_block(t, t.constant(random_tensor({6, 6, 3}, rng)), p, infer);
            CHECK(t.val(y).shape == std::vector<int>{6, 6, 4});
            CHECK(t.val(y).all_finite());
        }
    }
}

TEST_CASE("residual_block") {
    Rng rng(2);
    RunCtx infer;
    ParamStore ps;
    BlockConfig cfg;
    cfg.filters = 8;
    auto p = make_conv_block(ps, "b", 8, cfg, rng);

    SUBCASE("zeroed parameters give the exact identity") {
        zero_params(ps);
        Tensor in = random_tensor({16, 16, 8}, rng);
        Tape t;
        NodeId y = residual_block(t, t.constant(in), p, infer);
        CHECK(t.val(y).data == in.data);
    }

    SUBCASE("shape preserved") {
        Tape t;
        NodeId y = residual_block(t, t.constant(random_tensor({16, 16, 8}, rng)), p, infer);
        CHECK(t.val(y).shape == std::vector<int>{16, 16, 8});
    }

    SUBCASE("channel mismatch is a skip error") {
        Tape t;
        NodeId x = t.constant(random_tensor({16, 16, 4}, rng));
        CHECK_THROWS_WITH(static_cast<void>(residual_block(t, x, p, infer)),
                          "skip shape mismatch");
    }
}

TEST_CASE("dense_block") {
    Rng rng(3);
    RunCtx infer;
    ParamStore ps;
    BlockConfig cfg;
    cfg.filters = 8;

    SUBCASE("channel growth: 8 + 2*4 = 16") {
        auto p = make_dense_block(ps, "d", 8, cfg, 4, 2, rng);
        Tape t;
        NodeId y = dense_block(t, t.constant(random_tensor({5, 5, 8}, rng)), p, infer);
        CHECK(t.val(y).shape == std::vector<int>{5, 5, 16});
    }

    SUBCASE("zero layers is the identity") {
        auto p = make_dense_block(ps, "e", 8, cfg, 4, 0, rng);
        Tensor in = random_tensor({5, 5, 8}, rng);
        Tape t;
        NodeId y = dense_block(t, t.constant(in), p, infer);
        CHECK(t.val(y).data == in.data);
    }
}

TEST_CASE("convnext_block") {
    Rng rng(4);
    ParamStore ps;
    auto p = make_convnext_block(ps, "cn", 8, rng);

    SUBCASE("zeroed parameters give the exact identity") {
        zero_params(ps);
        Tensor in = random_tensor({16, 16, 8}, rng);
        Tape t;
        NodeId y = convnext_block(t, t.constant(in), p);
        CHECK(t.val(y).data == in.data);
    }

    SUBCASE("shape and expansion arithmetic") {
        Tape t;
        NodeId y = convnext_block(t, t.constant(random_tensor({16, 16, 8}, rng)), p);
        CHECK(t.val(y).shape == std::vector<int>{16, 16, 8});
        CHECK(p.pw1.w->value.shape == std::vector<int>{1, 1, 8, 32});  // 4x expansion
    }

    SUBCASE("channel mismatch") {
        Tape t;
        NodeId x = t.constant(random_tensor({8, 8, 4}, rng));
        CHECK_THROWS_WITH(static_cast<void>(convnext_block(t, x, p)), "skip shape mismatch");
    }
}

TEST_CASE("convlstm_step") {
    Rng rng(5);
    ParamStore ps;
    auto p = make_convlstm(ps, "lstm", 2, 8, 3, rng);

    SUBCASE("zeroed parameters follow the closed form") {
        zero_params(ps);
        Tensor x = random_tensor({6, 6, 2}, rng);
        Tensor c_prev = random_tensor({6, 6, 8}, rng);
        Tensor h_prev = random_tensor({6, 6, 8}, rng);
        Tape t;
        LstmState prev{t.constant(h_prev), t.constant(c_prev)};
        LstmState next = convlstm_step(t, t.constant(x), prev, p);
        // sigmoid(0) = 0.5 and tanh(0) = 0, so c = 0.5*c_prev and
        // h = 0.5*tanh(0.5*c_prev).
        for (std::int64_t i = 0; i < c_prev.numel(); ++i) {
            CHECK(t.val(next.c)[i] == doctest::Approx(0.5 * c_prev[i]).epsilon(1e-12));
            CHECK(t.val(next.h)[i] ==
                  doctest::Approx(0.5 * std::tanh(0.5 * c_prev[i])).epsilon(1e-12));
        }
    }

    SUBCASE("origin is a fixed point") {
        zero_params(ps);
        Tape t;
        LstmState prev{t.constant(Tensor({6, 6, 8})), t.constant(Tensor({6, 6, 8}))};
        LstmState next = convlstm_step(t, t.constant(Tensor({6, 6, 2})), prev, p);
        for (double v : t.val(next.h).data) CHECK(v == 0.0);
    }

    SUBCASE("hidden shape contract") {
        Tape t;
        LstmState prev{t.constant(Tensor({16, 16, 8})), t.constant(Tensor({16, 16, 8}))};
        LstmState next = convlstm_step(t, t.constant(random_tensor({16, 16, 2}, rng)), prev, p);
        CHECK(t.val(next.h).shape == std::vector<int>{16, 16, 8});
    }

    SUBCASE("state shape mismatch") {
        Tape t;
        LstmState prev{t.constant(Tensor({5, 5, 8})), t.constant(Tensor({5, 5, 8}))};
        CHECK_THROWS_WITH(
            static_cast<void>(convlstm_step(t, t.constant(Tensor({6, 6, 2})), prev, p)),
            "state shape mismatch");
    }
}

TEST_CASE("channel_attention") {
    Rng rng(6);
    ParamStore ps;
    auto p = make_channel_attention(ps, "att", 8, 4, rng);

    SUBCASE("zeroed parameters scale by exactly 0.5") {
        zero_params(ps);
        Tensor in = random_tensor({7, 7, 8}, rng);
        Tape t;
        NodeId y = channel_attention(t, t.constant(in), p);
        for (std::int64_t i = 0; i < in.numel(); ++i)
            CHECK(t.val(y)[i] == doctest::Approx(0.5 * in[i]).epsilon(1e-12));
    }

    SUBCASE("attention strictly shrinks nonzero inputs") {
        Tensor in = random_tensor({7, 7, 8}, rng);
        Tape t;
        NodeId y = channel_attention(t, t.constant(in), p);
        CHECK(tensor_norm(t.val(y)) < tensor_norm(in));
        CHECK(t.val(y).shape == in.shape);
    }

    SUBCASE("indivisible reduction ratio") {
        ParamStore ps2;
        CHECK_THROWS_WITH(static_cast<void>(make_channel_attention(ps2, "a", 6, 4, rng)),
                          "bad reduction ratio");
    }
}

TEST_CASE("localized_conv_block") {
    Rng rng(7);

    SUBCASE("identity configuration") {
        ParamStore ps;
        auto p = make_localized_conv_block(ps, "lcb", 4, 4, 2, 2, 2, 1, rng);
        // 1x1 bottleneck set to identity, local k=1 weights to identity.
        p.bottleneck.w->value.fill(0.0);
        p.bottleneck.w->value.at(0, 0, 0, 0) = 1.0;
        p.bottleneck.w->value.at(0, 0, 1, 1) = 1.0;
        p.bottleneck.b->value.fill(0.0);
        p.w->value.fill(0.0);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                for (int c = 0; c < 2; ++c)
                    p.w->value[((((static_cast<std::int64_t>(i) * 4 + j) * 1 + 0) * 1 + 0) * 2 + c) *
                                   2 +
                               c] = 1.0;
        p.b->value.fill(0.0);

        Tensor in = random_tensor({4, 4, 2}, rng);
        Tape t;
        NodeId y = localized_conv_block(t, t.constant(in), p);
        for (std::int64_t i = 0; i < in.numel(); ++i)
            CHECK(t.val(y)[i] == doctest::Approx(in[i]).epsilon(1e-12));
    }

    SUBCASE("untied weights: one position's weight edit moves only that cell") {
        ParamStore ps;
        auto p = make_localized_conv_block(ps, "lcb", 6, 6, 3, 2, 2, 3, rng);
        Tensor in = random_tensor({6, 6, 3}, rng);
        Tape t1;
        Tensor before = t1.val(localized_conv_block(t1, t1.constant(in), p));

        // Double every weight at output position (2, 3).
        const int yi = 2, xj = 3;
        for (int ki = 0; ki < 3; ++ki)
            for (int kj = 0; kj < 3; ++kj)
                for (int ci = 0; ci < 2; ++ci)
                    for (int co = 0; co < 2; ++co)
                        p.w->value[((((static_cast<std::int64_t>(yi) * 6 + xj) * 3 + ki) * 3 + kj) *
                                        2 +
                                    ci) *
                                       2 +
                                   co] *= 2.0;
        Tape t2;
        Tensor after = t2.val(localized_conv_block(t2, t2.constant(in), p));

        int changed_positions = 0;
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                bool changed = false;
                for (int c = 0; c < 2; ++c)
                    if (before.at(i, j, c) != after.at(i, j, c)) changed = true;
                if (changed) {
                    ++changed_positions;
                    CHECK(i == yi);
                    CHECK(j == xj);
                }
            }
        CHECK(changed_positions == 1);
    }

    SUBCASE("parameter count formula") {
        ParamStore ps;
        const int y = 5, x = 7, k = 3, bneck = 4, out = 6;
        auto p = make_localized_conv_block(ps, "lcb", y, x, 8, bneck, out, k, rng);
        const std::int64_t local_params = p.w->value.numel() + p.b->value.numel();
        CHECK(local_params == static_cast<std::int64_t>(y) * x * (k * k * bneck + 1) * out);
    }
}

TEST_CASE("upsampling blocks") {
    Rng rng(8);
    ParamStore ps;

    SUBCASE("SPC shape: (2,2,4) conv to out*s^2 then shift") {
        auto p = make_upsample(ps, "spc", Upsampling::SPC, 4, 1, 2, 3, rng);
        Tape t;
        NodeId y = upsample(t, t.constant(random_tensor({2, 2, 4}, rng)), p);
        CHECK(t.val(y).shape == std::vector<int>{4, 4, 1});
    }

    SUBCASE("phase shift with s=1 is the identity") {
        Tape t;
        Tensor in = random_tensor({3, 3, 4}, rng);
        NodeId y = t.phase_shift(t.constant(in), 1);
        CHECK(t.val(y).data == in.data);
    }

    SUBCASE("phase shift rejects indivisible channels") {
        Tape t;
        CHECK_THROWS_WITH(static_cast<void>(t.phase_shift(t.constant(Tensor({2, 2, 3})), 2)),
                          "bad channel count for phase shift");
    }

    SUBCASE("DC zero-insertion semantics with a unit 1x1 kernel") {
        ParamStore ps2;
        auto p = make_upsample(ps2, "dc", Upsampling::DC, 1, 1, 2, 1, rng);
        p.conv.w->value.fill(1.0);
        p.conv.b->value.fill(0.0);
        Tensor in = random_tensor({3, 3, 1}, rng);
        Tape t;
        NodeId y = upsample(t, t.constant(in), p);
        const Tensor& out = t.val(y);
        CHECK(out.shape == std::vector<int>{6, 6, 1});
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) {
                if (i % 2 == 0 && j % 2 == 0)
                    CHECK(out.at(i, j, 0) == in.at(i / 2, j / 2, 0));
                else
                    CHECK(out.at(i, j, 0) == 0.0);
            }
    }

    SUBCASE("DC checkerboard diagnostic: constant input, 3x3 kernel") {
        ParamStore ps2;
        auto p = make_upsample(ps2, "dc", Upsampling::DC, 1, 1, 2, 3, rng);
        Tensor in({8, 8, 1}, 1.0);
        Tape t;
        const Tensor& out = t.val(upsample(t, t.constant(in), p));
        // Interior output is spatially periodic with period 2 in each
        // direction: the classic pattern. Flagged, not forbidden.
        CHECK(out.at(4, 4, 0) == doctest::Approx(out.at(6, 6, 0)).epsilon(1e-9));
        CHECK(out.at(5, 5, 0) == doctest::Approx(out.at(7, 7, 0)).epsilon(1e-9));
        CHECK(out.at(4, 5, 0) == doctest::Approx(out.at(6, 7, 0)).epsilon(1e-9));
    }

    SUBCASE("RC: resize then conv, shape contract") {
        auto p = make_upsample(ps, "rc", Upsampling::RC, 3, 5, 2, 3, rng);
        Tape t;
        NodeId y = upsample(t, t.constant(random_tensor({8, 8, 3}, rng)), p);
        CHECK(t.val(y).shape == std::vector<int>{16, 16, 5});
    }

    SUBCASE("bilinear resize keeps constants constant") {
        Tape t;
        NodeId y = t.resize_bilinear(t.constant(Tensor({5, 5, 2}, 4.2)), 3);
        for (double v : t.val(y).data) CHECK(v == doctest::Approx(4.2).epsilon(1e-12));
    }

    SUBCASE("bilinear resize with factor 1 is the identity") {
        Tape t;
        Tensor in = random_tensor({5, 7, 2}, rng);
        NodeId y = t.resize_bilinear(t.constant(in), 1);
        CHECK(t.val(y).data == in.data);
    }
}

TEST_CASE("encoder and decoder blocks") {
    Rng rng(9);
    RunCtx infer;
    ParamStore ps;
    BlockConfig cfg;
    cfg.filters = 8;
    auto enc = make_conv_block(ps, "enc", 3, cfg, rng);

    SUBCASE("encoder halves spatial dims") {
        Tape t;
        auto [pooled, skip] =
            encoder_block(t, t.constant(random_tensor({16, 16, 3}, rng)), enc, infer);
        CHECK(t.val(pooled).shape == std::vector<int>{8, 8, 8});
        CHECK(t.val(skip).shape == std::vector<int>{16, 16, 8});
    }

    SUBCASE("max pooling of a constant field is constant") {
        Tape t;
        NodeId y = t.max_pool2(t.constant(Tensor({6, 6, 2}, 7.5)));
        for (double v : t.val(y).data) CHECK(v == 7.5);
    }

    SUBCASE("decoder concatenates skip channels") {
        BlockConfig dcfg;
        dcfg.filters = 4;
        auto dec = make_conv_block(ps, "dec", 8 + 6, dcfg, rng);
        Tape t;
        NodeId x = t.constant(random_tensor({4, 4, 8}, rng));
        NodeId skip = t.constant(random_tensor({8, 8, 6}, rng));
        NodeId y = decoder_block(t, x, skip, dec, infer);
        CHECK(t.val(y).shape == std::vector<int>{8, 8, 4});
    }

    SUBCASE("skip dims mismatch") {
        BlockConfig dcfg;
        dcfg.filters = 4;
        auto dec = make_conv_block(ps, "dec2", 14, dcfg, rng);
        Tape t;
        NodeId x = t.constant(random_tensor({4, 4, 8}, rng));
        NodeId skip = t.constant(random_tensor({6, 6, 6}, rng));
        CHECK_THROWS_WITH(static_cast<void>(decoder_block(t, x, skip, dec, infer)),
                          "skip shape mismatch");
    }
}

TEST_CASE("blocks preserve finiteness on random inputs") {
    Rng rng(10);
    RunCtx infer;
    ParamStore ps;
    BlockConfig cfg;
    cfg.filters = 6;
    cfg.attention = true;
    auto cb = make_conv_block(ps, "cb", 6, cfg, rng);
    auto db = make_dense_block(ps, "db", 6, cfg, 3, 2, rng);
    auto nx = make_convnext_block(ps, "nx", 6, rng);
    auto rb = make_recurrent_block(ps, "rb", 6, cfg, rng);
    auto up_spc = make_upsample(ps, "up_spc", Upsampling::SPC, 6, 6, 2, 3, rng);
    auto up_dc = make_upsample(ps, "up_dc", Upsampling::DC, 6, 6, 2, 3, rng);
    auto up_rc = make_upsample(ps, "up_rc", Upsampling::RC, 6, 6, 2, 3, rng);
    auto lcb = make_localized_conv_block(ps, "lcb", 6, 6, 6, 3, 4, 3, rng);
    BlockConfig dcfg = cfg;
    auto dec = make_conv_block(ps, "dec", 6 + 6, dcfg, rng);

    for (int trial = 0; trial < 5; ++trial) {
        Tensor in = random_tensor({6, 6, 6}, rng, 0.0, 3.0);
        Tape t;
        NodeId x = t.constant(in);
        CHECK(t.val(residual_block(t, x, cb, infer)).all_finite());
        CHECK(t.val(dense_block(t, x, db, infer)).all_finite());
        CHECK(t.val(convnext_block(t, x, nx)).all_finite());
        CHECK(t.val(upsample(t, x, up_spc)).all_finite());
        CHECK(t.val(upsample(t, x, up_dc)).all_finite());
        CHECK(t.val(upsample(t, x, up_rc)).all_finite());
        CHECK(t.val(localized_conv_block(t, x, lcb)).all_finite());
        auto [pooled, skip] = encoder_block(t, x, cb, infer);
        CHECK(t.val(pooled).all_finite());
        CHECK(t.val(decoder_block(t, pooled, skip, dec, infer)).all_finite());
        auto seq = recurrent_block(t, {x, x, x}, rb, infer);
        CHECK(t.val(seq.back()).all_finite());
    }
}

}  // TEST_SUITE
