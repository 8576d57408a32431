#include "dsc/networks.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dsc {

using nn::NodeId;
using nn::RunCtx;
using nn::Tape;

std::string to_string(Backbone b) {
    switch (b) {
        case Backbone::Convnet: return "convnet";
        case Backbone::Resnet: return "resnet";
        case Backbone::Densenet: return "densenet";
        case Backbone::Unet: return "unet";
        default: return "convnext";
    }
}

Backbone backbone_from_string(const std::string& s) {
    if (s == "convnet") return Backbone::Convnet;
    if (s == "resnet") return Backbone::Resnet;
    if (s == "densenet") return Backbone::Densenet;
    if (s == "unet") return Backbone::Unet;
    if (s == "convnext") return Backbone::Convnext;
    throw std::runtime_error("unknown backbone: " + s);
}

namespace {

std::string norm_to_string(nn::NormKind k) {
    switch (k) {
        case nn::NormKind::None: return "none";
        case nn::NormKind::Batch: return "batch";
        default: return "layer";
    }
}

nn::NormKind norm_from_string(const std::string& s) {
    if (s == "none") return nn::NormKind::None;
    if (s == "batch") return nn::NormKind::Batch;
    if (s == "layer") return nn::NormKind::Layer;
    throw std::runtime_error("unknown normalization: " + s);
}

}  // namespace

void ArchitectureSpec::validate() const {
    auto bad = [](const std::string& why) -> void {
        throw std::runtime_error("invalid spec: " + why);
    };
    if (n_blocks < 1) bad("n_blocks must be >= 1");
    if (filters < 1) bad("filters must be >= 1");
    if (kernel % 2 == 0) bad("kernel must be odd");
    if (lr_y < 1 || lr_x < 1) bad("input grid dims must be set");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) bad("dropout rate outside [0,1)");
    if (upsampling != Upsampling::PIN && scale < 2) bad("post-upsampling needs scale >= 2");
    if (backbone == Backbone::Unet) {
        if (upsampling != Upsampling::PIN) bad("unet is only implemented for pre-upsampled input");
        if (sample_kind != SampleKind::Spatial) bad("unet is only implemented for spatial samples");
        if (lr_y % 4 != 0 || lr_x % 4 != 0) bad("unet needs grid dims divisible by 4");
    }
    if (backbone == Backbone::Resnet && in_channels() > filters)
        bad("resnet outer skip needs filters >= input channels");
    if (n_static_channels < 0 || n_predictor_channels < 0) bad("negative channel counts");
    if (use_lcb && (lcb_bottleneck < 1 || lcb_out_channels < 1)) bad("bad LCB channels");
}

std::string ArchitectureSpec::to_text() const {
    std::ostringstream out;
    out << "backbone = " << to_string(backbone) << "\n";
    out << "upsampling = " << dsc::to_string(upsampling) << "\n";
    out << "sample_kind = " << dsc::to_string(sample_kind) << "\n";
    out << "scale = " << scale << "\n";
    out << "n_blocks = " << n_blocks << "\n";
    out << "filters = " << filters << "\n";
    out << "kernel = " << kernel << "\n";
    out << "use_lcb = " << (use_lcb ? "true" : "false") << "\n";
    out << "dropout_rate = " << dropout_rate << "\n";
    out << "attention = " << (attention ? "true" : "false") << "\n";
    out << "normalization = " << norm_to_string(normalization) << "\n";
    out << "n_static_channels = " << n_static_channels << "\n";
    out << "n_predictor_channels = " << n_predictor_channels << "\n";
    out << "lr_y = " << lr_y << "\n";
    out << "lr_x = " << lr_x << "\n";
    out << "lcb_bottleneck = " << lcb_bottleneck << "\n";
    out << "lcb_out_channels = " << lcb_out_channels << "\n";
    out << "dense_growth = " << dense_growth << "\n";
    out << "dense_layers = " << dense_layers << "\n";
    return out.str();
}

ArchitectureSpec ArchitectureSpec::from_text(const std::string& text) {
    ArchitectureSpec s;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key, eq, value;
        if (!(ls >> key >> eq >> value) || eq != "=") continue;
        if (key == "backbone") s.backbone = backbone_from_string(value);
        else if (key == "upsampling") s.upsampling = upsampling_from_string(value);
        else if (key == "sample_kind") s.sample_kind = sample_kind_from_string(value);
        else if (key == "scale") s.scale = std::stoi(value);
        else if (key == "n_blocks") s.n_blocks = std::stoi(value);
        else if (key == "filters") s.filters = std::stoi(value);
        else if (key == "kernel") s.kernel = std::stoi(value);
        else if (key == "use_lcb") s.use_lcb = (value == "true");
        else if (key == "dropout_rate") s.dropout_rate = std::stod(value);
        else if (key == "attention") s.attention = (value == "true");
        else if (key == "normalization") s.normalization = norm_from_string(value);
        else if (key == "n_static_channels") s.n_static_channels = std::stoi(value);
        else if (key == "n_predictor_channels") s.n_predictor_channels = std::stoi(value);
        else if (key == "lr_y") s.lr_y = std::stoi(value);
        else if (key == "lr_x") s.lr_x = std::stoi(value);
        else if (key == "lcb_bottleneck") s.lcb_bottleneck = std::stoi(value);
        else if (key == "lcb_out_channels") s.lcb_out_channels = std::stoi(value);
        else if (key == "dense_growth") s.dense_growth = std::stoi(value);
        else if (key == "dense_layers") s.dense_layers = std::stoi(value);
        else throw std::runtime_error("unknown spec field: " + key);
    }
    return s;
}

// ---------------------------------------------------------------------- Model

Model::Model(const ArchitectureSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    spec_.validate();
    Rng rng = Rng::derive(init_seed, "init");
    const int f = spec_.filters;
    const int cin = spec_.in_channels();

    nn::BlockConfig cfg;
    cfg.filters = f;
    cfg.kernel = spec_.kernel;
    cfg.dropout_rate = spec_.dropout_rate;
    cfg.normalization = spec_.normalization;
    cfg.attention = spec_.attention;

    const bool temporal = spec_.sample_kind == SampleKind::Spatiotemporal;

    // Backbone section.
    if (temporal) {
        nn::BlockConfig rcfg = cfg;
        if (spec_.backbone == Backbone::Convnext) rcfg.kernel = 7;
        int c = cin;
        if (spec_.backbone != Backbone::Convnet) {
            stem_ = nn::make_conv_layer(params_, "backbone.stem", cin, f, spec_.kernel, rng);
            c = f;
        }
        for (int i = 0; i < spec_.n_blocks; ++i) {
            const std::string prefix = "backbone.block" + std::to_string(i);
            if (spec_.backbone == Backbone::Densenet) {
                nn::BlockConfig dcfg = rcfg;
                dcfg.filters = spec_.dense_growth;
                recurrent_blocks_.push_back(nn::make_recurrent_block(params_, prefix, c, dcfg, rng));
                c += spec_.dense_growth;
            } else {
                recurrent_blocks_.push_back(nn::make_recurrent_block(params_, prefix, c, rcfg, rng));
                c = f;
            }
        }
        if (spec_.backbone == Backbone::Densenet)
            dense_transition_ =
                nn::make_conv_layer(params_, "backbone.transition", cin + c, f, 1, rng);
    } else if (spec_.backbone == Backbone::Unet) {
        nn::BlockConfig e0 = cfg, e1 = cfg, bn = cfg, d1 = cfg, d0 = cfg;
        e1.filters = 2 * f;
        bn.filters = 4 * f;
        d1.filters = 2 * f;
        encoders_.push_back(nn::make_conv_block(params_, "backbone.enc0", cin, e0, rng));
        encoders_.push_back(nn::make_conv_block(params_, "backbone.enc1", f, e1, rng));
        unet_bottleneck_ = nn::make_conv_block(params_, "backbone.bottleneck", 2 * f, bn, rng);
        decoders_.push_back(nn::make_conv_block(params_, "backbone.dec1", 4 * f + 2 * f, d1, rng));
        decoders_.push_back(nn::make_conv_block(params_, "backbone.dec0", 2 * f + f, d0, rng));
    } else {
        int c = cin;
        if (spec_.backbone != Backbone::Convnet) {
            stem_ = nn::make_conv_layer(params_, "backbone.stem", cin, f, spec_.kernel, rng);
            c = f;
        }
        for (int i = 0; i < spec_.n_blocks; ++i) {
            const std::string prefix = "backbone.block" + std::to_string(i);
            switch (spec_.backbone) {
                case Backbone::Convnet:
                    conv_blocks_.push_back(nn::make_conv_block(params_, prefix, c, cfg, rng));
                    c = f;
                    break;
                case Backbone::Resnet:
                    conv_blocks_.push_back(nn::make_conv_block(params_, prefix, f, cfg, rng));
                    break;
                case Backbone::Densenet:
                    dense_blocks_.push_back(nn::make_dense_block(params_, prefix, c, cfg,
                                                                 spec_.dense_growth,
                                                                 spec_.dense_layers, rng));
                    c += spec_.dense_growth * spec_.dense_layers;
                    break;
                case Backbone::Convnext:
                    convnext_blocks_.push_back(nn::make_convnext_block(params_, prefix, f, rng));
                    break;
                default: break;
            }
        }
        if (spec_.backbone == Backbone::Densenet)
            dense_transition_ =
                nn::make_conv_layer(params_, "backbone.transition", cin + c, f, 1, rng);
    }

    // Residual branches start near the identity so stacking blocks does not
    // inflate activations at initialization.
    if (spec_.backbone == Backbone::Resnet || spec_.backbone == Backbone::Convnext) {
        const double branch_scale = 1.0 / std::sqrt(static_cast<double>(spec_.n_blocks));
        for (auto& b : conv_blocks_)
            for (double& v : b.c2.w->value.data) v *= branch_scale;
        for (auto& b : convnext_blocks_)
            for (double& v : b.pw2.w->value.data) v *= branch_scale;
    }

    if (spec_.upsampling != Upsampling::PIN)
        upsample_ = nn::make_upsample(params_, "backbone.up", spec_.upsampling, f, f, spec_.scale,
                                      spec_.kernel, rng);

    // Output module.
    int concat_channels = f;
    if (spec_.use_lcb) {
        lcb_ = nn::make_localized_conv_block(params_, "out.lcb", spec_.hr_y(), spec_.hr_x(), f,
                                             spec_.lcb_bottleneck, spec_.lcb_out_channels, 3, rng);
        concat_channels += spec_.lcb_out_channels;
    }
    if (spec_.n_static_channels > 0) {
        nn::BlockConfig scfg = cfg;
        scfg.attention = false;
        static_branch_ = nn::make_conv_block(params_, "out.static", spec_.n_static_channels, scfg, rng);
        concat_channels += f;
    }
    transition_ = nn::make_conv_layer(params_, "out.transition", concat_channels, f, 1, rng);
    nn::BlockConfig h1 = cfg;
    h1.attention = true;  // first head block applies channel attention by default
    head1_ = nn::make_conv_block(params_, "out.head1", f, h1, rng);
    nn::BlockConfig h2 = cfg;
    h2.attention = false;
    head2_ = nn::make_conv_block(params_, "out.head2", f, h2, rng);
    final_conv_ = nn::make_conv_layer(params_, "out.final", f, 1, 1, rng);
}

nn::NodeId Model::backbone_graph(Tape& t, const Tensor& lr_input, const RunCtx& ctx) {
    const int f = spec_.filters;
    const bool temporal = spec_.sample_kind == SampleKind::Spatiotemporal;

    NodeId features = -1;
    if (temporal) {
        if (lr_input.rank() != 4 || lr_input.dim(1) != spec_.lr_y || lr_input.dim(2) != spec_.lr_x ||
            lr_input.dim(3) != spec_.in_channels() || lr_input.dim(0) < 1)
            throw std::runtime_error("sample/spec mismatch");
        const int steps = lr_input.dim(0);

        std::vector<NodeId> seq;
        Tensor last_frame({spec_.lr_y, spec_.lr_x, spec_.in_channels()});
        for (int k = 0; k < steps; ++k) {
            Tensor frame({spec_.lr_y, spec_.lr_x, spec_.in_channels()});
            for (int i = 0; i < spec_.lr_y; ++i)
                for (int j = 0; j < spec_.lr_x; ++j)
                    for (int c = 0; c < spec_.in_channels(); ++c)
                        frame.at(i, j, c) = lr_input.at(k, i, j, c);
            if (k == steps - 1) last_frame = frame;
            NodeId node = t.constant(std::move(frame));
            if (stem_) node = t.conv2d(node, t.param(*stem_->w), t.param(*stem_->b));
            seq.push_back(node);
        }

        for (const auto& block : recurrent_blocks_) {
            std::vector<NodeId> out = nn::recurrent_block(t, seq, block, ctx);
            if (spec_.backbone == Backbone::Resnet || spec_.backbone == Backbone::Convnext) {
                for (std::size_t k = 0; k < seq.size(); ++k) out[k] = t.add(seq[k], out[k]);
            } else if (spec_.backbone == Backbone::Densenet) {
                for (std::size_t k = 0; k < seq.size(); ++k)
                    out[k] = t.concat_channels({seq[k], out[k]});
            }
            seq = std::move(out);
        }
        // Time reduction: last hidden state.
        features = seq.back();
        if (spec_.backbone == Backbone::Resnet) {
            features = t.add(features, t.pad_channels(t.constant(last_frame), f));
        } else if (spec_.backbone == Backbone::Densenet) {
            features = t.concat_channels({t.constant(last_frame), features});
            features = t.conv2d(features, t.param(*dense_transition_->w),
                                t.param(*dense_transition_->b));
        }
    } else {
        if (lr_input.rank() != 3 || lr_input.dim(0) != spec_.lr_y || lr_input.dim(1) != spec_.lr_x ||
            lr_input.dim(2) != spec_.in_channels())
            throw std::runtime_error("sample/spec mismatch");
        NodeId x = t.constant(lr_input);

        switch (spec_.backbone) {
            case Backbone::Convnet: {
                NodeId y = x;
                for (const auto& b : conv_blocks_) y = nn::conv_block(t, y, b, ctx);
                features = y;
                break;
            }
            case Backbone::Resnet: {
                NodeId y = t.conv2d(x, t.param(*stem_->w), t.param(*stem_->b));
                for (const auto& b : conv_blocks_) y = nn::residual_block(t, y, b, ctx);
                features = t.add(y, t.pad_channels(x, f));
                break;
            }
            case Backbone::Densenet: {
                NodeId y = t.conv2d(x, t.param(*stem_->w), t.param(*stem_->b));
                for (const auto& b : dense_blocks_) y = nn::dense_block(t, y, b, ctx);
                y = t.concat_channels({x, y});
                features = t.conv2d(y, t.param(*dense_transition_->w),
                                    t.param(*dense_transition_->b));
                break;
            }
            case Backbone::Convnext: {
                NodeId y = t.conv2d(x, t.param(*stem_->w), t.param(*stem_->b));
                for (const auto& b : convnext_blocks_) y = nn::convnext_block(t, y, b);
                features = y;
                break;
            }
            case Backbone::Unet: {
                auto [p0, skip0] = nn::encoder_block(t, x, encoders_[0], ctx);
                auto [p1, skip1] = nn::encoder_block(t, p0, encoders_[1], ctx);
                NodeId y = nn::conv_block(t, p1, *unet_bottleneck_, ctx);
                y = nn::decoder_block(t, y, skip1, decoders_[0], ctx);
                features = nn::decoder_block(t, y, skip0, decoders_[1], ctx);
                break;
            }
        }
    }

    if (upsample_) features = nn::upsample(t, features, *upsample_);
    return features;
}

nn::NodeId Model::output_module_graph(Tape& t, NodeId backbone_out, const Tensor& statics,
                                      const RunCtx& ctx) {
    const Tensor& vb = t.val(backbone_out);
    if (vb.dim(0) != spec_.hr_y() || vb.dim(1) != spec_.hr_x())
        throw std::runtime_error("sample/spec mismatch");

    std::vector<NodeId> branches = {backbone_out};
    if (lcb_) branches.push_back(nn::localized_conv_block(t, backbone_out, *lcb_));
    if (static_branch_) {
        if (statics.rank() != 3 || statics.dim(0) != spec_.hr_y() || statics.dim(1) != spec_.hr_x() ||
            statics.dim(2) != spec_.n_static_channels)
            throw std::runtime_error("static grid mismatch");
        branches.push_back(nn::conv_block(t, t.constant(statics), *static_branch_, ctx));
    }
    NodeId y = branches.size() > 1 ? t.concat_channels(branches) : branches[0];
    y = t.conv2d(y, t.param(*transition_.w), t.param(*transition_.b));
    y = nn::conv_block(t, y, *head1_, ctx);
    y = nn::conv_block(t, y, *head2_, ctx);
    return t.conv2d(y, t.param(*final_conv_.w), t.param(*final_conv_.b));
}

nn::NodeId Model::forward_graph(Tape& t, const Tensor& lr_input, const Tensor& statics,
                                const RunCtx& ctx) {
    if ((spec_.sample_kind == SampleKind::Spatial) != (lr_input.rank() == 3))
        throw std::runtime_error("sample/spec mismatch");
    NodeId features = backbone_graph(t, lr_input, ctx);
    return output_module_graph(t, features, statics, ctx);
}

Tensor Model::forward(const Tensor& lr_input, const Tensor& statics, nn::Mode mode, Rng* dropout) {
    Tape t;
    RunCtx ctx;
    ctx.mode = mode;
    ctx.dropout = dropout;
    return t.val(forward_graph(t, lr_input, statics, ctx));
}

Tensor Model::backbone_forward(const Tensor& lr_input, nn::Mode mode, Rng* dropout) {
    Tape t;
    RunCtx ctx;
    ctx.mode = mode;
    ctx.dropout = dropout;
    return t.val(backbone_graph(t, lr_input, ctx));
}

// -------------------------------------------------------------- Discriminator

Discriminator::Discriminator(const ArchitectureSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    Rng rng = Rng::derive(init_seed, "disc-init");
    int c = 1 + spec_.in_channels();  // HR candidate + resized LR condition
    int f = 32;
    for (int i = 0; i < 4; ++i) {
        nn::BlockConfig cfg;
        cfg.filters = f;
        cfg.kernel = spec_.kernel;
        cfg.dropout_rate = spec_.dropout_rate;
        blocks_.push_back(
            nn::make_conv_block(params_, "disc.block" + std::to_string(i), c, cfg, rng));
        c = f;
        f *= 2;
    }
    head_ = nn::make_conv_layer(params_, "disc.head", c, 1, 1, rng);
}

nn::NodeId Discriminator::forward_graph(Tape& t, NodeId hr_field, const Tensor& lr_condition,
                                        const RunCtx& ctx) {
    // Condition on the (last frame of the) LR input, resized to HR dims.
    Tensor frame;
    if (lr_condition.rank() == 4) {
        const int steps = lr_condition.dim(0);
        frame = Tensor({lr_condition.dim(1), lr_condition.dim(2), lr_condition.dim(3)});
        for (int i = 0; i < frame.dim(0); ++i)
            for (int j = 0; j < frame.dim(1); ++j)
                for (int ch = 0; ch < frame.dim(2); ++ch)
                    frame.at(i, j, ch) = lr_condition.at(steps - 1, i, j, ch);
    } else {
        frame = lr_condition;
    }
    NodeId cond = t.constant(std::move(frame));
    if (spec_.upsampling != Upsampling::PIN) cond = t.resize_bilinear(cond, spec_.scale);

    NodeId y = t.concat_channels({hr_field, cond});
    for (const auto& b : blocks_) y = nn::conv_block(t, y, b, ctx, 2);
    y = t.global_avg_pool(y);
    y = t.conv2d(y, t.param(*head_.w), t.param(*head_.b));
    return t.sum(t.sigmoid(y));  // (1,1,1) -> scalar
}

double Discriminator::score(const Tensor& hr_field, const Tensor& lr_condition) {
    Tape t;
    RunCtx ctx;
    return t.val(forward_graph(t, t.constant(hr_field), lr_condition, ctx))[0];
}

// --------------------------------------------------------------- checkpoints

namespace {
constexpr char kParamsMagic[4] = {'D', 'S', 'C', 'P'};
}

void save_params(const std::string& path, const nn::ParamStore& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kParamsMagic, 4);
    const std::uint64_t count = params.size();
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const nn::Param& p = params.at(i);
        const std::uint32_t name_len = static_cast<std::uint32_t>(p.name.size());
        out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
        out.write(p.name.data(), name_len);
        const std::uint32_t rank = static_cast<std::uint32_t>(p.value.rank());
        out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
        for (int d : p.value.shape) {
            const std::uint32_t dim = static_cast<std::uint32_t>(d);
            out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
        }
        out.write(reinterpret_cast<const char*>(&offset), sizeof(offset));
        offset += static_cast<std::uint64_t>(p.value.numel()) * sizeof(double);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const nn::Param& p = params.at(i);
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
}

void load_params(const std::string& path, nn::ParamStore& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint corrupt");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kParamsMagic, 4) != 0)
        throw std::runtime_error("checkpoint corrupt");
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || count != params.size()) throw std::runtime_error("spec mismatch");

    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        Entry e;
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (!in || name_len > 4096) throw std::runtime_error("checkpoint corrupt");
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        std::uint32_t rank = 0;
        in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
        if (!in || rank > 8) throw std::runtime_error("checkpoint corrupt");
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t dim = 0;
            in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
            e.shape.push_back(static_cast<int>(dim));
        }
        in.read(reinterpret_cast<char*>(&e.offset), sizeof(e.offset));
        if (!in) throw std::runtime_error("checkpoint corrupt");
        entries.push_back(std::move(e));
    }
    const std::streampos data_start = in.tellg();
    for (std::uint64_t i = 0; i < count; ++i) {
        nn::Param& p = params.at(static_cast<std::size_t>(i));
        const Entry& e = entries[static_cast<std::size_t>(i)];
        if (e.name != p.name || e.shape != p.value.shape) throw std::runtime_error("spec mismatch");
        in.seekg(data_start + static_cast<std::streamoff>(e.offset));
        in.read(reinterpret_cast<char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint corrupt");
    }
}

void save_checkpoint(const std::string& dir, const Model& model) {
    std::filesystem::create_directories(dir);
    std::ofstream spec_out(dir + "/spec.txt");
    if (!spec_out) throw std::runtime_error("cannot write checkpoint: " + dir);
    spec_out << model.spec().to_text();
    spec_out.close();
    save_params(dir + "/params.bin", model.params());
}

Model load_checkpoint(const std::string& dir) {
    std::ifstream spec_in(dir + "/spec.txt");
    if (!spec_in) throw std::runtime_error("checkpoint corrupt");
    std::stringstream buf;
    buf << spec_in.rdbuf();
    Model model(ArchitectureSpec::from_text(buf.str()), 0);
    load_params(dir + "/params.bin", model.params());
    return model;
}

}  // namespace dsc
