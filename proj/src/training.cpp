#include "dsc/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dsc {

using nn::NodeId;
using nn::RunCtx;
using nn::Tape;

void TrainReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write train log: " + path);
    out.precision(10);
    out << "# epoch train_loss val_loss";
    if (!d_loss.empty()) out << " d_loss";
    out << " seconds\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e) {
        out << (e + 1) << " " << train_loss[e] << " " << val_loss[e];
        if (!d_loss.empty()) out << " " << d_loss[e];
        out << " " << seconds[e] << "\n";
    }
}

// ----------------------------------------------------------------------- Adam

Adam::Adam(nn::ParamStore& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_.emplace_back(params_.at(i).value.shape);
        v_.emplace_back(params_.at(i).value.shape);
    }
}

void Adam::step(double grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        nn::Param& p = params_.at(i);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad[j] * grad_scale;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            p.value[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
    }
}

namespace {
constexpr char kAdamMagic[4] = {'D', 'S', 'C', 'A'};
}

void Adam::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write optimizer state: " + path);
    out.write(kAdamMagic, 4);
    out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    const std::uint64_t count = m_.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        const std::uint64_t n = static_cast<std::uint64_t>(m_[i].numel());
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(m_[i].data.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
        out.write(reinterpret_cast<const char*>(v_[i].data.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
    }
}

void Adam::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint corrupt");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kAdamMagic, 4) != 0) throw std::runtime_error("checkpoint corrupt");
    in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || count != m_.size()) throw std::runtime_error("spec mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) {
        std::uint64_t n = 0;
        in.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (!in || n != static_cast<std::uint64_t>(m_[i].numel()))
            throw std::runtime_error("spec mismatch");
        in.read(reinterpret_cast<char*>(m_[i].data.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        in.read(reinterpret_cast<char*>(v_[i].data.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint corrupt");
    }
}

// ------------------------------------------------------------------ internals

namespace {

struct SplitView {
    std::vector<const SamplePair*> train;
    std::vector<const SamplePair*> val;
};

SplitView split_validation(const std::vector<SamplePair>& samples, double val_fraction) {
    SplitView out;
    std::size_t n_val = 0;
    if (val_fraction > 0.0 && samples.size() >= 2) {
        n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(samples.size())));
        n_val = std::min(n_val, samples.size() - 1);
    }
    const std::size_t n_train = samples.size() - n_val;
    for (std::size_t i = 0; i < n_train; ++i) out.train.push_back(&samples[i]);
    for (std::size_t i = n_train; i < samples.size(); ++i) out.val.push_back(&samples[i]);
    return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

void write_epoch_state(const std::string& dir, int epoch) {
    std::ofstream out(dir + "/state.txt");
    out << "epoch = " << epoch << "\n";
}

double validation_loss(Model& model, const std::vector<const SamplePair*>& val,
                       const LossSpec& loss) {
    if (val.empty()) return std::nan("");
    double total = 0.0;
    RunCtx ctx;  // infer mode
    Tape t;
    for (const SamplePair* sp : val) {
        t.reset();
        NodeId pred = model.forward_graph(t, sp->lr_input, sp->statics, ctx);
        total += t.val(losses::supervised_loss(t, pred, sp->hr_target, sp->mask, loss))[0];
    }
    return total / static_cast<double>(val.size());
}

}  // namespace

int read_checkpoint_epoch(const std::string& checkpoint_dir) {
    std::ifstream in(checkpoint_dir + "/state.txt");
    if (!in) return 0;
    std::string key, eq;
    int epoch = 0;
    in >> key >> eq >> epoch;
    return epoch;
}

// ------------------------------------------------------------------ supervised

TrainReport supervised_train(Model& model, const std::vector<SamplePair>& samples,
                             const TrainConfig& cfg, const std::string& out_dir, bool resume) {
    if (samples.empty()) throw std::runtime_error("no training samples");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::runtime_error("invalid train config");

    const std::string ckpt_dir = out_dir + "/checkpoint";
    std::filesystem::create_directories(ckpt_dir);

    const SplitView split = split_validation(samples, cfg.val_fraction);
    Adam adam(model.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

    int start_epoch = 0;
    if (resume) {
        start_epoch = read_checkpoint_epoch(ckpt_dir);
        adam.load(ckpt_dir + "/optim.bin");
    }

    TrainReport report;
    Tape tape;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = Rng::derive(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        Rng dropout_rng = Rng::derive(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch));
        const auto order = shuffled_indices(split.train.size(), shuffle_rng);

        RunCtx ctx;
        ctx.mode = nn::Mode::Train;
        ctx.dropout = &dropout_rng;

        double epoch_loss = 0.0;
        int batch_index = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            model.params().zero_grads();
            double batch_loss = 0.0;
            for (std::size_t i = pos; i < end; ++i) {
                const SamplePair& sp = *split.train[order[i]];
                tape.reset();
                NodeId pred = model.forward_graph(tape, sp.lr_input, sp.statics, ctx);
                NodeId loss = losses::supervised_loss(tape, pred, sp.hr_target, sp.mask, cfg.loss);
                batch_loss += tape.val(loss)[0];
                tape.backward(loss);
            }
            if (!std::isfinite(batch_loss))
                throw DivergedError("diverged at epoch " + std::to_string(epoch + 1) + " batch " +
                                    std::to_string(batch_index + 1));
            adam.step(1.0 / static_cast<double>(end - pos));
            epoch_loss += batch_loss;
            ++batch_index;
        }

        report.train_loss.push_back(epoch_loss / static_cast<double>(split.train.size()));
        report.val_loss.push_back(validation_loss(model, split.val, cfg.loss));
        report.seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

        const bool last = epoch + 1 == cfg.epochs;
        if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
            save_checkpoint(ckpt_dir, model);
            adam.save(ckpt_dir + "/optim.bin");
            write_epoch_state(ckpt_dir, epoch + 1);
        }
    }
    report.final_checkpoint = ckpt_dir;
    return report;
}

// ------------------------------------------------------------------------ cgan

TrainReport cgan_train(Model& generator, Discriminator& discriminator,
                       const std::vector<SamplePair>& samples, const TrainConfig& cfg,
                       const std::string& out_dir, bool resume) {
    if (samples.empty()) throw std::runtime_error("no training samples");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::runtime_error("invalid train config");

    const std::string ckpt_dir = out_dir + "/checkpoint";
    std::filesystem::create_directories(ckpt_dir);

    const SplitView split = split_validation(samples, cfg.val_fraction);
    Adam adam_g(generator.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    Adam adam_d(discriminator.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps);

    int start_epoch = 0;
    if (resume) {
        start_epoch = read_checkpoint_epoch(ckpt_dir);
        adam_g.load(ckpt_dir + "/optim_g.bin");
        adam_d.load(ckpt_dir + "/optim_d.bin");
        load_params(ckpt_dir + "/disc_params.bin", discriminator.params());
    }

    const double lambda = cfg.loss.adversarial_lambda;
    const LossSpec val_spec;  // validation reports pixel MAE

    TrainReport report;
    Tape tape;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = Rng::derive(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
        Rng g_dropout = Rng::derive(cfg.seed, "dropout-g", static_cast<std::uint64_t>(epoch));
        Rng d_dropout = Rng::derive(cfg.seed, "dropout-d", static_cast<std::uint64_t>(epoch));
        const auto order = shuffled_indices(split.train.size(), shuffle_rng);

        RunCtx g_ctx{nn::Mode::Train, &g_dropout};
        RunCtx d_ctx{nn::Mode::Train, &d_dropout};

        double g_epoch = 0.0, d_epoch = 0.0;
        int batch_index = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - pos);

            // Discriminator step: real and detached-fake batches.
            discriminator.params().zero_grads();
            double d_batch = 0.0;
            for (std::size_t i = pos; i < end; ++i) {
                const SamplePair& sp = *split.train[order[i]];
                tape.reset();
                NodeId fake = generator.forward_graph(tape, sp.lr_input, sp.statics, g_ctx);
                NodeId fake_detached = tape.constant(tape.val(fake));
                NodeId d_real =
                    discriminator.forward_graph(tape, tape.constant(sp.hr_target), sp.lr_input, d_ctx);
                NodeId d_fake = discriminator.forward_graph(tape, fake_detached, sp.lr_input, d_ctx);
                NodeId d_loss = losses::discriminator_loss(tape, d_real, d_fake);
                d_batch += tape.val(d_loss)[0];
                tape.backward(d_loss);
            }
            if (!std::isfinite(d_batch))
                throw DivergedError("diverged at epoch " + std::to_string(epoch + 1) + " batch " +
                                    std::to_string(batch_index + 1));
            adam_d.step(inv_batch);
            d_epoch += d_batch;

            // Generator step: adversarial term through the frozen critic.
            generator.params().zero_grads();
            double g_batch = 0.0;
            for (std::size_t i = pos; i < end; ++i) {
                const SamplePair& sp = *split.train[order[i]];
                tape.reset();
                NodeId fake = generator.forward_graph(tape, sp.lr_input, sp.statics, g_ctx);
                NodeId d_fake = discriminator.forward_graph(tape, fake, sp.lr_input, d_ctx);
                NodeId g_loss =
                    losses::generator_loss(tape, d_fake, fake, sp.hr_target, sp.mask, lambda);
                g_batch += tape.val(g_loss)[0];
                tape.backward(g_loss);
            }
            if (!std::isfinite(g_batch))
                throw DivergedError("diverged at epoch " + std::to_string(epoch + 1) + " batch " +
                                    std::to_string(batch_index + 1));
            adam_g.step(inv_batch);
            g_epoch += g_batch;
            ++batch_index;
        }

        report.train_loss.push_back(g_epoch / static_cast<double>(split.train.size()));
        report.d_loss.push_back(d_epoch / static_cast<double>(split.train.size()));
        report.val_loss.push_back(validation_loss(generator, split.val, val_spec));
        report.seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

        const bool last = epoch + 1 == cfg.epochs;
        if (last || (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)) {
            save_checkpoint(ckpt_dir, generator);
            save_params(ckpt_dir + "/disc_params.bin", discriminator.params());
            adam_g.save(ckpt_dir + "/optim_g.bin");
            adam_d.save(ckpt_dir + "/optim_d.bin");
            write_epoch_state(ckpt_dir, epoch + 1);
        }
    }
    report.final_checkpoint = ckpt_dir;
    return report;
}

}  // namespace dsc
