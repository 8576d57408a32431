#include "dsc/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dsc {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

VarRef parse_var_ref(const std::string& s, const std::string& field) {
    const auto pos = s.rfind(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 == s.size())
        throw ConfigError(field + ": expected \"path:variable\", got \"" + s + "\"");
    return {s.substr(0, pos), s.substr(pos + 1)};
}

/// Typed view over the parsed key-value map that tracks consumed keys, so
/// typos surface as "unknown field" diagnostics.
class KeyValues {
public:
    explicit KeyValues(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    template <typename F>
    auto typed(const std::string& key, const F& convert, decltype(convert("")) fallback)
        -> decltype(convert("")) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        try {
            return convert(it->second);
        } catch (const std::exception& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }

    double num(const std::string& key, double fallback) {
        return typed(
            key, [](const std::string& s) { return std::stod(s); }, fallback);
    }

    int integer(const std::string& key, int fallback) {
        return typed(
            key, [](const std::string& s) { return std::stoi(s); }, fallback);
    }

    bool boolean(const std::string& key, bool fallback) {
        return typed(
            key,
            [](const std::string& s) {
                if (s == "true" || s == "yes" || s == "1") return true;
                if (s == "false" || s == "no" || s == "0") return false;
                throw std::runtime_error("expected true/false");
            },
            fallback);
    }

    void check_all_used() const {
        for (const auto& [k, v] : kv_)
            if (!used_.count(k)) throw ConfigError("unknown config field: " + k);
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (kv.count(key)) throw ConfigError("duplicate config field: " + key);
        kv[key] = value;
    }

    KeyValues k(std::move(kv));
    ExperimentConfig c;

    c.label = k.str("label", "model");
    c.seed = static_cast<std::uint64_t>(k.num("seed", 0));
    c.holdout_fraction = k.num("split.holdout_fraction", 0.2);
    c.scaler = k.typed(
        "scaler", [](const std::string& s) { return scaler_kind_from_string(s); },
        ScalerKind::Standard);

    if (k.has("synthetic.hr_y") || k.has("synthetic.t")) {
        SyntheticParams sp;
        sp.hr_y = k.integer("synthetic.hr_y", sp.hr_y);
        sp.hr_x = k.integer("synthetic.hr_x", sp.hr_x);
        sp.t_steps = k.integer("synthetic.t", sp.t_steps);
        sp.scale = k.integer("synthetic.scale", sp.scale);
        sp.seed = c.seed;
        sp.n_predictors = k.integer("synthetic.n_predictors", sp.n_predictors);
        sp.n_modes = k.integer("synthetic.n_modes", sp.n_modes);
        sp.noise = k.num("synthetic.noise", sp.noise);
        sp.topo_coupling = k.num("synthetic.topo_coupling", sp.topo_coupling);
        sp.mos_perturb = k.num("synthetic.mos_perturb", sp.mos_perturb);
        sp.location_bias = k.num("synthetic.location_bias", sp.location_bias);
        c.synthetic = sp;
    }

    if (k.has("data.predictand_hr"))
        c.data.predictand_hr = parse_var_ref(k.str("data.predictand_hr", ""), "data.predictand_hr");
    if (k.has("data.predictand_lr"))
        c.data.predictand_lr = parse_var_ref(k.str("data.predictand_lr", ""), "data.predictand_lr");
    for (const auto& item : split_list(k.str("data.predictors", "")))
        c.data.predictors.push_back(parse_var_ref(item, "data.predictors"));
    for (const auto& item : split_list(k.str("data.statics", "")))
        c.data.statics.push_back(parse_var_ref(item, "data.statics"));

    c.pairing.regime = k.typed(
        "pairing.regime", [](const std::string& s) { return regime_from_string(s); },
        Regime::PerfectProg);
    c.pairing.upsampling = k.typed(
        "pairing.upsampling", [](const std::string& s) { return upsampling_from_string(s); },
        Upsampling::SPC);
    c.pairing.scale = k.integer("pairing.scale", 4);
    c.pairing.sample_kind = k.typed(
        "pairing.sample_kind", [](const std::string& s) { return sample_kind_from_string(s); },
        SampleKind::Spatial);
    c.pairing.window_length = k.integer("pairing.window_length", 8);

    c.backbone = k.typed(
        "arch.backbone", [](const std::string& s) { return backbone_from_string(s); },
        Backbone::Resnet);
    c.n_blocks = k.integer("arch.n_blocks", 6);
    c.filters = k.integer("arch.filters", 32);
    c.kernel = k.integer("arch.kernel", 3);
    c.use_lcb = k.boolean("arch.use_lcb", true);
    c.dropout_rate = k.num("arch.dropout_rate", 0.0);
    c.attention = k.boolean("arch.attention", false);
    c.normalization = k.typed(
        "arch.normalization",
        [](const std::string& s) {
            if (s == "none") return nn::NormKind::None;
            if (s == "batch") return nn::NormKind::Batch;
            if (s == "layer") return nn::NormKind::Layer;
            throw std::runtime_error("expected none/batch/layer");
        },
        nn::NormKind::None);
    c.lcb_bottleneck = k.integer("arch.lcb_bottleneck", 8);
    c.lcb_out_channels = k.integer("arch.lcb_out_channels", 8);
    c.dense_growth = k.integer("arch.dense_growth", 12);
    c.dense_layers = k.integer("arch.dense_layers", 2);

    const std::string learning = k.str("train.learning", "supervised");
    if (learning == "supervised")
        c.adversarial = false;
    else if (learning == "adversarial")
        c.adversarial = true;
    else
        throw ConfigError("train.learning: expected supervised or adversarial");

    c.train.epochs = k.integer("train.epochs", 100);
    c.train.batch_size = k.integer("train.batch_size", 16);
    c.train.learning_rate = k.num("train.learning_rate", c.adversarial ? 2e-4 : 1e-4);
    c.train.checkpoint_every = k.integer("train.checkpoint_every", 0);
    c.train.val_fraction = k.num("train.val_fraction", 0.1);
    c.train.seed = c.seed;

    c.train.loss.kind = k.typed(
        "loss.kind", [](const std::string& s) { return loss_kind_from_string(s); }, LossKind::MAE);
    c.train.loss.ssim_window = k.integer("loss.ssim_window", 11);
    c.train.loss.data_range = k.num("loss.data_range", 0.0);  // 0 = derive from training data
    c.train.loss.ms_scales = k.integer("loss.ms_scales", 5);
    c.train.loss.adversarial_lambda = k.num("loss.adversarial_lambda", 100.0);

    k.check_all_used();
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void ExperimentConfig::validate() const {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw ConfigError("split.holdout_fraction: must be in (0,1)");
    const bool have_synthetic = synthetic.has_value();
    if (!have_synthetic && !data.predictand_hr)
        throw ConfigError("data.predictand_hr: required unless synthetic.* is configured");
    if (pairing.regime == Regime::PerfectProg && data.predictand_lr)
        throw ConfigError(
            "data.predictand_lr: must not be set in the PerfectProg regime (the low-resolution "
            "input is synthesized by coarsening)");
    if (pairing.regime == Regime::MOS && !have_synthetic && !data.predictand_lr)
        throw ConfigError("data.predictand_lr: required in the MOS regime");
    if (pairing.scale < 2) throw ConfigError("pairing.scale: must be >= 2");
    if (pairing.sample_kind == SampleKind::Spatiotemporal && pairing.window_length < 1)
        throw ConfigError("pairing.window_length: must be >= 1");
    if (train.epochs < 1) throw ConfigError("train.epochs: must be >= 1");
    if (train.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate: must be > 0");
    if (synthetic && (synthetic->hr_y % pairing.scale != 0 || synthetic->hr_x % pairing.scale != 0))
        throw ConfigError("synthetic grid dims must be divisible by pairing.scale");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("arch.dropout_rate: must be in [0,1)");
}

ArchitectureSpec ExperimentConfig::make_spec(int lr_y, int lr_x, int n_predictors,
                                             int n_statics) const {
    ArchitectureSpec s;
    s.backbone = backbone;
    s.upsampling = pairing.upsampling;
    s.sample_kind = pairing.sample_kind;
    s.scale = pairing.scale;
    s.n_blocks = n_blocks;
    s.filters = filters;
    s.kernel = kernel;
    s.use_lcb = use_lcb;
    s.dropout_rate = dropout_rate;
    s.attention = attention;
    s.normalization = normalization;
    s.n_static_channels = n_statics;
    s.n_predictor_channels = n_predictors;
    s.lr_y = lr_y;
    s.lr_x = lr_x;
    s.lcb_bottleneck = lcb_bottleneck;
    s.lcb_out_channels = lcb_out_channels;
    s.dense_growth = dense_growth;
    s.dense_layers = dense_layers;
    return s;
}

}  // namespace dsc
