#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dsc/losses.hpp"
#include "dsc/networks.hpp"
#include "testutil.hpp"

using namespace dsc;
using dsc::testutil::random_tensor;

namespace {

ArchitectureSpec small_spec() {
    ArchitectureSpec s;
    s.backbone = Backbone::Resnet;
    s.upsampling = Upsampling::SPC;
    s.scale = 4;
    s.n_blocks = 2;
    s.filters = 16;
    s.lr_y = 8;
    s.lr_x = 8;
    s.n_static_channels = 2;
    s.n_predictor_channels = 2;
    s.use_lcb = true;
    return s;
}

Tensor sample_input(const ArchitectureSpec& s, Rng& rng) {
    if (s.sample_kind == SampleKind::Spatiotemporal)
        return random_tensor({3, s.lr_y, s.lr_x, s.in_channels()}, rng);
    return random_tensor({s.lr_y, s.lr_x, s.in_channels()}, rng);
}

Tensor sample_statics(const ArchitectureSpec& s, Rng& rng) {
    return random_tensor({s.hr_y(), s.hr_x(), s.n_static_channels}, rng, 0.0, 1.0);
}

void zero_all(nn::ParamStore& ps) {
    for (std::size_t i = 0; i < ps.size(); ++i) ps.at(i).value.fill(0.0);
}

}  // namespace

TEST_SUITE("networks") {

TEST_CASE("spec validation") {
    ArchitectureSpec s = small_spec();

    SUBCASE("unet demands pre-upsampled spatial samples") {
        s.backbone = Backbone::Unet;
        s.upsampling = Upsampling::SPC;
        CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("invalid spec"), std::runtime_error);

        s.upsampling = Upsampling::PIN;
        s.sample_kind = SampleKind::Spatiotemporal;
        CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("invalid spec"), std::runtime_error);

        s.sample_kind = SampleKind::Spatial;
        s.lr_y = 32;
        s.lr_x = 32;
        CHECK_NOTHROW(s.validate());
    }

    SUBCASE("resnet needs filters >= input channels for the outer skip") {
        s.n_predictor_channels = 20;
        s.filters = 16;
        CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("invalid spec"), std::runtime_error);
    }

    SUBCASE("text round trip") {
        ArchitectureSpec back = ArchitectureSpec::from_text(s.to_text());
        CHECK(back.to_text() == s.to_text());
    }
}

TEST_CASE("golden parameter counts per spec") {
    // Frozen once from the deterministic builders; any drift in architecture
    // wiring shows up here.
    {
        Model m(small_spec(), 1);
        CHECK(m.params().total_parameters() == 657659);
    }
    {
        ArchitectureSpec s = small_spec();
        s.backbone = Backbone::Unet;
        s.upsampling = Upsampling::PIN;
        s.lr_y = 32;
        s.lr_x = 32;
        Model m(s, 1);
        CHECK(m.params().total_parameters() == 729067);
    }
    {
        ArchitectureSpec s = small_spec();
        s.backbone = Backbone::Densenet;
        s.upsampling = Upsampling::RC;
        Model m(s, 1);
        CHECK(m.params().total_parameters() == 629403);
    }
    {
        ArchitectureSpec s = small_spec();
        s.backbone = Backbone::Convnext;
        s.upsampling = Upsampling::DC;
        s.use_lcb = false;
        Model m(s, 1);
        CHECK(m.params().total_parameters() == 21219);
    }
    {
        ArchitectureSpec s = small_spec();
        s.backbone = Backbone::Convnet;
        s.sample_kind = SampleKind::Spatiotemporal;
        Model m(s, 1);
        CHECK(m.params().total_parameters() == 714427);
    }
    {
        Discriminator d(small_spec(), 1);
        CHECK(d.params().total_parameters() == 1172801);
    }

    SUBCASE("building twice is deterministic") {
        Model a(small_spec(), 7), b(small_spec(), 7);
        REQUIRE(a.params().size() == b.params().size());
        for (std::size_t i = 0; i < a.params().size(); ++i) {
            CHECK(a.params().at(i).name == b.params().at(i).name);
            CHECK(a.params().at(i).value.data == b.params().at(i).value.data);
        }
    }
}

TEST_CASE("resnet outer skip carries the raw input through zeroed backbones") {
    ArchitectureSpec s = small_spec();
    s.upsampling = Upsampling::PIN;  // dims preserved end to end
    Model m(s, 3);
    zero_all(m.params());
    Rng rng(4);
    Tensor in = random_tensor({s.lr_y, s.lr_x, s.in_channels()}, rng);
    Tensor out = m.backbone_forward(in, nn::Mode::Infer);
    REQUIRE(out.shape == std::vector<int>{s.lr_y, s.lr_x, s.filters});
    for (int i = 0; i < s.lr_y; ++i)
        for (int j = 0; j < s.lr_x; ++j) {
            for (int c = 0; c < s.in_channels(); ++c) CHECK(out.at(i, j, c) == in.at(i, j, c));
            for (int c = s.in_channels(); c < s.filters; ++c) CHECK(out.at(i, j, c) == 0.0);
        }
}

TEST_CASE("forward shape and determinism contracts") {
    Rng rng(5);

    SUBCASE("output dims match the HR target for all valid combinations") {
        for (Backbone b : {Backbone::Convnet, Backbone::Resnet, Backbone::Densenet,
                           Backbone::Convnext, Backbone::Unet}) {
            for (Upsampling u :
                 {Upsampling::PIN, Upsampling::RC, Upsampling::DC, Upsampling::SPC}) {
                if (b == Backbone::Unet && u != Upsampling::PIN) continue;
                ArchitectureSpec s = small_spec();
                s.backbone = b;
                s.upsampling = u;
                s.n_blocks = 1;
                s.filters = 8;
                s.scale = 2;
                s.lr_y = u == Upsampling::PIN ? 8 : 4;
                s.lr_x = s.lr_y;
                Model m(s, 11);
                Tensor out = m.forward(sample_input(s, rng), sample_statics(s, rng),
                                       nn::Mode::Infer);
                CHECK(out.shape == std::vector<int>{s.hr_y(), s.hr_x(), 1});
            }
        }
    }

    SUBCASE("spatiotemporal variants produce HR fields") {
        for (Backbone b :
             {Backbone::Convnet, Backbone::Resnet, Backbone::Densenet, Backbone::Convnext}) {
            ArchitectureSpec s = small_spec();
            s.backbone = b;
            s.sample_kind = SampleKind::Spatiotemporal;
            s.n_blocks = 1;
            s.filters = 8;
            s.scale = 2;
            s.lr_y = 4;
            s.lr_x = 4;
            Model m(s, 12);
            Tensor out = m.forward(sample_input(s, rng), sample_statics(s, rng), nn::Mode::Infer);
            CHECK(out.shape == std::vector<int>{8, 8, 1});
        }
    }

    SUBCASE("infer mode is bit-deterministic; MC dropout is not") {
        ArchitectureSpec s = small_spec();
        s.dropout_rate = 0.3;
        Model m(s, 13);
        Tensor in = sample_input(s, rng);
        Tensor st = sample_statics(s, rng);
        Tensor a = m.forward(in, st, nn::Mode::Infer);
        Tensor b = m.forward(in, st, nn::Mode::Infer);
        CHECK(a.data == b.data);

        Rng d1(100), d2(200);
        Tensor c = m.forward(in, st, nn::Mode::MC, &d1);
        Tensor d = m.forward(in, st, nn::Mode::MC, &d2);
        CHECK(c.data != d.data);
    }

    SUBCASE("sample/spec mismatch") {
        Model m(small_spec(), 14);
        Tensor bad = random_tensor({5, 5, 3}, rng);
        Tensor st = sample_statics(small_spec(), rng);
        CHECK_THROWS_WITH(static_cast<void>(m.forward(bad, st, nn::Mode::Infer)),
                          "sample/spec mismatch");
    }

    SUBCASE("static grid mismatch") {
        Model m(small_spec(), 15);
        Tensor in = sample_input(small_spec(), rng);
        Tensor bad_statics = random_tensor({8, 8, 2}, rng);
        CHECK_THROWS_WITH(static_cast<void>(m.forward(in, bad_statics, nn::Mode::Infer)),
                          "static grid mismatch");
    }
}

TEST_CASE("end-to-end gradient flow for every backbone x upsampling") {
    Rng rng(6);
    auto first_layer_grad_norm = [&](ArchitectureSpec s) {
        Model m(s, 21);
        Tensor in = sample_input(s, rng);
        Tensor st = sample_statics(s, rng);
        Tensor target = random_tensor({s.hr_y(), s.hr_x(), 1}, rng);
        Tensor mask(target.shape, 1.0);

        m.params().zero_grads();
        nn::Tape t;
        nn::RunCtx ctx;
        nn::NodeId pred = m.forward_graph(t, in, st, ctx);
        LossSpec spec;
        t.backward(losses::mae(t, pred, target, mask));

        double norm = 0.0;
        for (double g : m.params().at(0).grad.data) norm += g * g;
        return std::sqrt(norm);
    };

    for (Backbone b : {Backbone::Convnet, Backbone::Resnet, Backbone::Densenet,
                       Backbone::Convnext, Backbone::Unet}) {
        for (Upsampling u : {Upsampling::PIN, Upsampling::RC, Upsampling::DC, Upsampling::SPC}) {
            if (b == Backbone::Unet && u != Upsampling::PIN) continue;
            ArchitectureSpec s = small_spec();
            s.backbone = b;
            s.upsampling = u;
            s.n_blocks = 1;
            s.filters = 8;
            s.scale = 2;
            s.lr_y = u == Upsampling::PIN ? 8 : 4;
            s.lr_x = s.lr_y;
            CAPTURE(to_string(b));
            CAPTURE(to_string(u));
            CHECK(first_layer_grad_norm(s) > 0.0);
        }
    }
    for (Backbone b :
         {Backbone::Convnet, Backbone::Resnet, Backbone::Densenet, Backbone::Convnext}) {
        for (Upsampling u : {Upsampling::PIN, Upsampling::RC, Upsampling::DC, Upsampling::SPC}) {
            ArchitectureSpec s = small_spec();
            s.backbone = b;
            s.upsampling = u;
            s.sample_kind = SampleKind::Spatiotemporal;
            s.n_blocks = 1;
            s.filters = 8;
            s.scale = 2;
            s.lr_y = u == Upsampling::PIN ? 8 : 4;
            s.lr_x = s.lr_y;
            CAPTURE(to_string(b));
            CAPTURE(to_string(u));
            CHECK(first_layer_grad_norm(s) > 0.0);
        }
    }
}

TEST_CASE("the eight showcase configurations are constructible") {
    struct Row {
        Regime regime;
        bool adversarial;
        SampleKind kind;
        Backbone backbone;
        Upsampling upsampling;
        bool lcb;
        LossKind loss;
    };
    const std::vector<Row> rows = {
        {Regime::PerfectProg, false, SampleKind::Spatial, Backbone::Unet, Upsampling::PIN, false,
         LossKind::MAE},
        {Regime::MOS, false, SampleKind::Spatial, Backbone::Unet, Upsampling::PIN, false,
         LossKind::MAE},
        {Regime::PerfectProg, false, SampleKind::Spatial, Backbone::Resnet, Upsampling::SPC, false,
         LossKind::DSSIM_MAE},
        {Regime::MOS, false, SampleKind::Spatial, Backbone::Resnet, Upsampling::SPC, true,
         LossKind::DSSIM_MAE},
        {Regime::MOS, false, SampleKind::Spatial, Backbone::Resnet, Upsampling::SPC, true,
         LossKind::MAE},
        {Regime::MOS, true, SampleKind::Spatial, Backbone::Resnet, Upsampling::SPC, true,
         LossKind::MAE},
        {Regime::MOS, false, SampleKind::Spatiotemporal, Backbone::Resnet, Upsampling::SPC, true,
         LossKind::DSSIM_MAE},
        {Regime::MOS, false, SampleKind::Spatial, Backbone::Convnext, Upsampling::SPC, true,
         LossKind::MAE},
    };
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        ArchitectureSpec s = small_spec();
        s.backbone = row.backbone;
        s.upsampling = row.upsampling;
        s.sample_kind = row.kind;
        s.use_lcb = row.lcb;
        if (row.upsampling == Upsampling::PIN) {
            s.lr_y = 32;
            s.lr_x = 32;
        }
        CAPTURE(i);
        CHECK_NOTHROW(static_cast<void>(Model(s, 31 + static_cast<std::uint64_t>(i))));
        if (row.adversarial)
            CHECK_NOTHROW(static_cast<void>(Discriminator(s, 41)));
    }
}

TEST_CASE("discriminator") {
    Rng rng(7);
    ArchitectureSpec s = small_spec();
    Discriminator d(s, 8);
    Tensor hr = random_tensor({s.hr_y(), s.hr_x(), 1}, rng);
    Tensor lr = random_tensor({s.lr_y, s.lr_x, s.in_channels()}, rng);

    SUBCASE("score lies strictly inside (0,1)") {
        const double score = d.score(hr, lr);
        CHECK(score > 0.0);
        CHECK(score < 1.0);
    }

    SUBCASE("swapping the candidate changes the score") {
        Tensor other = random_tensor({s.hr_y(), s.hr_x(), 1}, rng);
        CHECK(d.score(hr, lr) != d.score(other, lr));
    }

    SUBCASE("conditioning on the LR input matters") {
        Tensor other_lr = random_tensor({s.lr_y, s.lr_x, s.in_channels()}, rng);
        CHECK(d.score(hr, lr) != d.score(hr, other_lr));
    }
}

TEST_CASE("checkpoint round trips are bit-exact") {
    Rng rng(9);
    ArchitectureSpec s = small_spec();
    Model m(s, 51);
    Tensor in = sample_input(s, rng);
    Tensor st = sample_statics(s, rng);
    Tensor before = m.forward(in, st, nn::Mode::Infer);

    const std::string dir = "ckpt_test";
    save_checkpoint(dir, m);

    SUBCASE("loaded model reproduces the forward pass bitwise") {
        Model back = load_checkpoint(dir);
        Tensor after = back.forward(in, st, nn::Mode::Infer);
        CHECK(after.data == before.data);
    }

    SUBCASE("truncated parameter file is rejected") {
        const auto size = std::filesystem::file_size(dir + "/params.bin");
        std::filesystem::resize_file(dir + "/params.bin", size / 2);
        CHECK_THROWS_WITH(static_cast<void>(load_checkpoint(dir)), "checkpoint corrupt");
        save_checkpoint(dir, m);  // restore for other subcases
    }

    SUBCASE("loading into a different spec is a spec mismatch") {
        ArchitectureSpec other = s;
        other.filters = 24;
        Model wrong(other, 52);
        CHECK_THROWS_WITH(load_params(dir + "/params.bin", wrong.params()), "spec mismatch");
    }

    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
