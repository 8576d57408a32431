#include "dsc/inference.hpp"

#include <cmath>
#include <stdexcept>

namespace dsc {

Tensor predict(Model& model, const SamplePair& sample, const ScalerState& scaler) {
    if (!scaler.fitted) throw std::runtime_error("scaler not fitted");
    Tensor out = model.forward(sample.lr_input, sample.statics, nn::Mode::Infer);
    return scaler.inverse_transform(out);
}

Ensemble mc_predict(Model& model, const SamplePair& sample, const ScalerState& scaler,
                    int n_members, std::uint64_t seed) {
    if (model.spec().dropout_rate <= 0.0) throw std::runtime_error("MC dropout requires dropout");
    if (n_members < 2) throw std::runtime_error("ensemble needs at least 2 members");
    if (!scaler.fitted) throw std::runtime_error("scaler not fitted");

    const int y = model.spec().hr_y(), x = model.spec().hr_x();
    Ensemble ens;
    ens.members = Tensor({n_members, y, x, 1});
    for (int m = 0; m < n_members; ++m) {
        Rng stream = Rng::derive(seed, "mc-member", static_cast<std::uint64_t>(m));
        Tensor field = model.forward(sample.lr_input, sample.statics, nn::Mode::MC, &stream);
        field = scaler.inverse_transform(field);
        for (int i = 0; i < y; ++i)
            for (int j = 0; j < x; ++j) ens.members.at(m, i, j, 0) = field.at(i, j, 0);
    }

    ens.mean = Tensor({y, x, 1});
    ens.std = Tensor({y, x, 1});
    for (int i = 0; i < y; ++i)
        for (int j = 0; j < x; ++j) {
            double s = 0.0;
            for (int m = 0; m < n_members; ++m) s += ens.members.at(m, i, j, 0);
            const double mean = s / n_members;
            double ss = 0.0;
            for (int m = 0; m < n_members; ++m) {
                const double d = ens.members.at(m, i, j, 0) - mean;
                ss += d * d;
            }
            ens.mean.at(i, j, 0) = mean;
            ens.std.at(i, j, 0) = std::sqrt(ss / (n_members - 1));
        }
    return ens;
}

}  // namespace dsc
