#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dsc/experiment.hpp"
#include "dsc/synthetic.hpp"
#include "dsc/training.hpp"
#include "testutil.hpp"

using namespace dsc;
using dsc::testutil::random_tensor;

namespace {

ArchitectureSpec tiny_spec(bool dropout = false) {
    ArchitectureSpec s;
    s.backbone = Backbone::Resnet;
    s.upsampling = Upsampling::SPC;
    s.scale = 2;
    s.n_blocks = 1;
    s.filters = 8;
    s.lr_y = 4;
    s.lr_x = 4;
    s.n_static_channels = 1;
    s.n_predictor_channels = 0;
    s.use_lcb = false;
    s.dropout_rate = dropout ? 0.2 : 0.0;
    return s;
}

/// Hand-made samples on a fixed smooth pattern so a tiny model can fit them.
std::vector<SamplePair> tiny_samples(const ArchitectureSpec& s, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<SamplePair> out;
    for (int k = 0; k < n; ++k) {
        SamplePair sp;
        sp.time_index = k;
        Tensor hr({s.hr_y(), s.hr_x(), 1});
        const double a = rng.uniform(0.5, 1.5);
        const double p = rng.uniform(0.0, 3.0);
        for (int i = 0; i < s.hr_y(); ++i)
            for (int j = 0; j < s.hr_x(); ++j)
                hr.at(i, j, 0) = a * std::sin(0.7 * i + p) * std::cos(0.9 * j);
        sp.hr_target = hr;
        sp.mask = Tensor(hr.shape, 1.0);
        sp.valid_cells = hr.numel();
        Tensor hr2d({s.hr_y(), s.hr_x()});
        for (int i = 0; i < s.hr_y(); ++i)
            for (int j = 0; j < s.hr_x(); ++j) hr2d.at(i, j) = hr.at(i, j, 0);
        Tensor lr = coarsen(hr2d, s.scale);
        sp.lr_input = Tensor({s.lr_y, s.lr_x, 1});
        for (int i = 0; i < s.lr_y; ++i)
            for (int j = 0; j < s.lr_x; ++j) sp.lr_input.at(i, j, 0) = lr.at(i, j);
        sp.statics = Tensor({s.hr_y(), s.hr_x(), 1});
        for (int i = 0; i < s.hr_y(); ++i)
            for (int j = 0; j < s.hr_x(); ++j)
                sp.statics.at(i, j, 0) = static_cast<double>(i) / s.hr_y();
        out.push_back(std::move(sp));
    }
    return out;
}

TrainConfig quick_config(int epochs, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    cfg.learning_rate = 2e-3;
    cfg.seed = seed;
    cfg.val_fraction = 0.0;
    return cfg;
}

std::vector<Tensor> snapshot(const nn::ParamStore& ps) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(ps.at(i).value);
    return out;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("zero learning rate leaves parameters untouched") {
    ArchitectureSpec s = tiny_spec();
    Model m(s, 1);
    const auto before = snapshot(m.params());
    TrainConfig cfg = quick_config(3, 2);
    cfg.learning_rate = 0.0;
    supervised_train(m, tiny_samples(s, 4, 3), cfg, "train_zero_lr");
    const auto after = snapshot(m.params());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].data == after[i].data);
    std::filesystem::remove_all("train_zero_lr");
}

TEST_CASE("fixed seeds give identical loss histories") {
    ArchitectureSpec s = tiny_spec(true);
    auto samples = tiny_samples(s, 6, 4);
    TrainConfig cfg = quick_config(4, 99);

    Model m1(s, 5);
    TrainReport r1 = supervised_train(m1, samples, cfg, "train_det_a");
    Model m2(s, 5);
    TrainReport r2 = supervised_train(m2, samples, cfg, "train_det_b");

    CHECK(r1.train_loss == r2.train_loss);
    for (std::size_t i = 0; i < m1.params().size(); ++i)
        CHECK(m1.params().at(i).value.data == m2.params().at(i).value.data);
    std::filesystem::remove_all("train_det_a");
    std::filesystem::remove_all("train_det_b");
}

TEST_CASE("loss decreases on an overfit-capable set") {
    ArchitectureSpec s = tiny_spec();
    auto samples = tiny_samples(s, 4, 6);
    Model m(s, 7);
    TrainReport r = supervised_train(m, samples, quick_config(30, 8), "train_overfit");
    const double first = r.train_loss.front();
    const double last = r.train_loss.back();
    CHECK(last < first);
    CHECK(last < 0.5 * first);
    std::filesystem::remove_all("train_overfit");
}

TEST_CASE("divergence aborts with the epoch and batch") {
    ArchitectureSpec s = tiny_spec();
    auto samples = tiny_samples(s, 2, 9);
    // A target far beyond double range under the squared loss forces inf.
    samples[0].hr_target.fill(1e200);
    TrainConfig cfg = quick_config(2, 10);
    cfg.loss.kind = LossKind::MSE;
    Model m(s, 11);
    CHECK_THROWS_WITH_AS(supervised_train(m, samples, cfg, "train_div"),
                         doctest::Contains("diverged at epoch"), DivergedError);
    std::filesystem::remove_all("train_div");
}

TEST_CASE("checkpoint resume matches uninterrupted training bit for bit") {
    ArchitectureSpec s = tiny_spec(true);
    auto samples = tiny_samples(s, 6, 12);

    // Uninterrupted: 6 epochs.
    Model full(s, 13);
    TrainReport r_full = supervised_train(full, samples, quick_config(6, 14), "train_full");

    // Interrupted: 3 epochs, then resume to 6 from the saved state.
    Model part(s, 13);
    supervised_train(part, samples, quick_config(3, 14), "train_part");
    Model resumed = load_checkpoint("train_part/checkpoint");
    TrainReport r_resumed = supervised_train(resumed, samples, quick_config(6, 14), "train_part",
                                             /*resume=*/true);

    CHECK(r_resumed.train_loss.size() == 3);
    CHECK(r_full.train_loss[3] == r_resumed.train_loss[0]);
    CHECK(r_full.train_loss[5] == r_resumed.train_loss[2]);
    for (std::size_t i = 0; i < full.params().size(); ++i)
        CHECK(full.params().at(i).value.data == resumed.params().at(i).value.data);

    std::filesystem::remove_all("train_full");
    std::filesystem::remove_all("train_part");
}

TEST_CASE("train report format") {
    TrainReport r;
    r.train_loss = {0.5, 0.25};
    r.val_loss = {0.6, 0.3};
    r.seconds = {1.0, 1.1};
    r.save("report_test.txt");
    std::ifstream in("report_test.txt");
    std::string header;
    std::getline(in, header);
    CHECK(header == "# epoch train_loss val_loss seconds");
    int epoch;
    double train, val, sec;
    in >> epoch >> train >> val >> sec;
    CHECK(epoch == 1);
    CHECK(train == 0.5);
    std::filesystem::remove("report_test.txt");
}

TEST_CASE("adversarial training completes with finite losses") {
    ArchitectureSpec s = tiny_spec(true);
    auto samples = tiny_samples(s, 6, 15);
    Model gen(s, 16);
    Discriminator disc(s, 17);
    const auto before = snapshot(gen.params());

    TrainConfig cfg = quick_config(3, 18);
    cfg.learning_rate = 2e-4;
    TrainReport r = cgan_train(gen, disc, samples, cfg, "train_cgan");

    REQUIRE(r.train_loss.size() == 3);
    REQUIRE(r.d_loss.size() == 3);
    for (double v : r.train_loss) CHECK(std::isfinite(v));
    for (double v : r.d_loss) CHECK(std::isfinite(v));

    // Generator parameters moved.
    bool changed = false;
    const auto after = snapshot(gen.params());
    for (std::size_t i = 0; i < before.size() && !changed; ++i)
        changed = before[i].data != after[i].data;
    CHECK(changed);
    std::filesystem::remove_all("train_cgan");
}

TEST_CASE("loss decreases for every showcase architecture on an overfit set") {
    struct Row {
        const char* regime;
        const char* learning;
        const char* sample;
        const char* backbone;
        const char* upsampling;
        bool lcb;
        const char* loss;
    };
    const std::vector<Row> rows = {
        {"PerfectProg", "supervised", "spatial", "unet", "PIN", false, "mae"},
        {"MOS", "supervised", "spatial", "unet", "PIN", false, "mae"},
        {"PerfectProg", "supervised", "spatial", "resnet", "SPC", false, "dssim_mae"},
        {"MOS", "supervised", "spatial", "resnet", "SPC", true, "dssim_mae"},
        {"MOS", "supervised", "spatial", "resnet", "SPC", true, "mae"},
        {"MOS", "adversarial", "spatial", "resnet", "SPC", true, "mae"},
        {"MOS", "supervised", "spatiotemp", "resnet", "SPC", true, "dssim_mae"},
        {"MOS", "supervised", "spatial", "convnext", "SPC", true, "mae"},
    };
    auto median_of = [](const std::vector<double>& xs, std::size_t from, std::size_t count) {
        std::vector<double> v(xs.begin() + static_cast<std::ptrdiff_t>(from),
                              xs.begin() + static_cast<std::ptrdiff_t>(from + count));
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& row = rows[i];
        std::ostringstream text;
        text << "label = R" << i << "\nseed = 29\n";
        text << "synthetic.hr_y = 16\nsynthetic.hr_x = 16\nsynthetic.t = 20\n";
        text << "synthetic.scale = 4\nsynthetic.n_predictors = 1\n";
        text << "pairing.regime = " << row.regime << "\n";
        text << "pairing.upsampling = " << row.upsampling << "\n";
        text << "pairing.scale = 4\npairing.sample_kind = " << row.sample << "\n";
        text << "pairing.window_length = 4\n";
        text << "arch.backbone = " << row.backbone << "\narch.n_blocks = 1\narch.filters = 8\n";
        text << "arch.use_lcb = " << (row.lcb ? "true" : "false") << "\n";
        if (std::string(row.learning) == "adversarial")
            text << "arch.dropout_rate = 0.2\ntrain.learning = adversarial\n";
        text << "train.epochs = 24\ntrain.batch_size = 4\ntrain.learning_rate = 1e-3\n";
        text << "train.val_fraction = 0\n";
        text << "loss.kind = " << row.loss << "\n";
        text << "loss.ssim_window = 7\n";

        CAPTURE(i);
        ExperimentConfig cfg = ExperimentConfig::parse(text.str());
        const std::string dir = "train_rows_" + std::to_string(i);
        PreparedData data = prepare_data(cfg, dir);
        const bool temporal = cfg.pairing.sample_kind == SampleKind::Spatiotemporal;
        const Tensor& first = data.train_samples[0].lr_input;
        ArchitectureSpec spec = cfg.make_spec(temporal ? first.dim(1) : first.dim(0),
                                              temporal ? first.dim(2) : first.dim(1),
                                              data.n_predictors, data.n_statics);
        Model model(spec, cfg.seed);
        TrainReport rep = train_model(model, cfg, data, dir, false);
        REQUIRE(rep.train_loss.size() == 24);
        CHECK(median_of(rep.train_loss, 14, 10) < median_of(rep.train_loss, 0, 10));
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("no data leakage: the validation split never reaches the optimizer") {
    // With val_fraction > 0 the trailing samples are excluded from training;
    // poisoning them with non-finite values must not derail the run.
    ArchitectureSpec s = tiny_spec();
    auto samples = tiny_samples(s, 5, 19);
    samples.back().hr_target.fill(1e200);  // would diverge under training
    TrainConfig cfg = quick_config(2, 20);
    cfg.val_fraction = 0.2;  // exactly the poisoned trailing sample
    cfg.loss.kind = LossKind::MSE;
    Model m(s, 21);
    TrainReport r = supervised_train(m, samples, cfg, "train_leak");
    for (double v : r.train_loss) CHECK(std::isfinite(v));
    std::filesystem::remove_all("train_leak");
}

}  // TEST_SUITE
