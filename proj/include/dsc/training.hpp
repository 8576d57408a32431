#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dsc/losses.hpp"
#include "dsc/networks.hpp"
#include "dsc/pairing.hpp"

namespace dsc {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 16;
    double learning_rate = 1e-4;  // CGAN default is 2e-4 for both networks
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    LossSpec loss;
    int checkpoint_every = 0;    // epochs between checkpoints; 0 = final only
    double val_fraction = 0.1;   // trailing share of the training samples
};

struct TrainReport {
    std::vector<double> train_loss;  // generator loss for adversarial runs
    std::vector<double> val_loss;    // NaN when there is no validation split
    std::vector<double> d_loss;      // adversarial runs only
    std::vector<double> seconds;
    std::string final_checkpoint;

    void save(const std::string& path) const;
};

struct DivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Adam over one parameter store. step() consumes the accumulated gradients
/// scaled by grad_scale (1/batch size for mean-loss gradients).
class Adam {
public:
    Adam(nn::ParamStore& params, double lr, double beta1, double beta2, double eps);

    void step(double grad_scale = 1.0);
    std::int64_t steps() const { return t_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    nn::ParamStore& params_;
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// Minibatch Adam on the configured supervised loss. Deterministic for fixed
/// (seed, data, config): per-epoch shuffle and dropout streams are derived
/// from (seed, epoch). Writes checkpoints (spec + params + optimizer state +
/// epoch counter) under out_dir/checkpoint. With resume = true the optimizer
/// state and epoch counter are restored from that directory, which makes a
/// resumed run bit-identical to an uninterrupted one.
/// Errors: DivergedError("diverged at epoch E batch B") on NaN loss.
TrainReport supervised_train(Model& model, const std::vector<SamplePair>& samples,
                             const TrainConfig& cfg, const std::string& out_dir,
                             bool resume = false);

/// Alternating conditional-adversarial training: one discriminator step
/// (real + fake batches) then one generator step per minibatch. Both loss
/// histories are logged; validation is pixel MAE in infer mode.
TrainReport cgan_train(Model& generator, Discriminator& discriminator,
                       const std::vector<SamplePair>& samples, const TrainConfig& cfg,
                       const std::string& out_dir, bool resume = false);

/// Epoch counter stored alongside a checkpoint ("epoch = N"); 0 if missing.
int read_checkpoint_epoch(const std::string& checkpoint_dir);

}  // namespace dsc
