#include "dsc/nn/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace dsc::nn {

NodeId apply_activation(Tape& t, NodeId x, Activation a) {
    switch (a) {
        case Activation::ReLU: return t.relu(x);
        case Activation::GELU: return t.gelu(x);
        case Activation::Sigmoid: return t.sigmoid(x);
        case Activation::Tanh: return t.tanh(x);
        case Activation::Linear: return x;
    }
    throw std::runtime_error("unknown activation");
}

void init_he_normal(Param& w, int fan_in, Rng& rng) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.value.data) v = rng.normal(0.0, std);
}

ConvLayerParams make_conv_layer(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch,
                                int kernel, Rng& rng) {
    ConvLayerParams p;
    p.w = &ps.create(prefix + ".w", {kernel, kernel, in_ch, out_ch});
    p.b = &ps.create(prefix + ".b", {out_ch});
    init_he_normal(*p.w, kernel * kernel * in_ch, rng);
    return p;
}

NormParams make_norm(ParamStore& ps, const std::string& prefix, NormKind kind, int channels) {
    NormParams n;
    n.kind = kind;
    if (kind == NormKind::None) return n;
    n.gamma = &ps.create(prefix + ".gamma", {channels});
    n.beta = &ps.create(prefix + ".beta", {channels});
    n.gamma->value.fill(1.0);
    return n;
}

namespace {

NodeId apply_norm(Tape& t, NodeId x, const NormParams& n) {
    if (n.kind == NormKind::None) return x;
    const NodeId g = t.param(*n.gamma);
    const NodeId b = t.param(*n.beta);
    return n.kind == NormKind::Layer ? t.layer_norm(x, g, b) : t.instance_norm(x, g, b);
}

NodeId maybe_dropout(Tape& t, NodeId x, double rate, const RunCtx& ctx) {
    if (rate <= 0.0 || !ctx.stochastic()) return x;
    if (!ctx.dropout) throw std::runtime_error("dropout stream missing");
    return t.dropout(x, rate, *ctx.dropout);
}

}  // namespace

AttentionParams make_channel_attention(ParamStore& ps, const std::string& prefix, int channels,
                                       int reduction, Rng& rng) {
    if (reduction < 1 || channels % reduction != 0) throw std::runtime_error("bad reduction ratio");
    AttentionParams p;
    p.reduction = reduction;
    p.reduce = make_conv_layer(ps, prefix + ".reduce", channels, channels / reduction, 1, rng);
    p.expand = make_conv_layer(ps, prefix + ".expand", channels / reduction, channels, 1, rng);
    return p;
}

NodeId channel_attention(Tape& t, NodeId x, const AttentionParams& p) {
    NodeId z = t.global_avg_pool(x);
    z = t.conv2d(z, t.param(*p.reduce.w), t.param(*p.reduce.b));
    z = t.relu(z);
    z = t.conv2d(z, t.param(*p.expand.w), t.param(*p.expand.b));
    z = t.sigmoid(z);
    return t.broadcast_mul_channels(x, z);
}

ConvBlockParams make_conv_block(ParamStore& ps, const std::string& prefix, int in_channels,
                                const BlockConfig& cfg, Rng& rng) {
    if (cfg.filters < 1) throw std::runtime_error("invalid block config: filters");
    if (cfg.kernel % 2 == 0) throw std::runtime_error("invalid block config: kernel must be odd");
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
        throw std::runtime_error("invalid block config: dropout rate");
    ConvBlockParams p;
    p.cfg = cfg;
    p.in_channels = in_channels;
    p.c1 = make_conv_layer(ps, prefix + ".conv1", in_channels, cfg.filters, cfg.kernel, rng);
    p.n1 = make_norm(ps, prefix + ".norm1", cfg.normalization, cfg.filters);
    p.c2 = make_conv_layer(ps, prefix + ".conv2", cfg.filters, cfg.filters, cfg.kernel, rng);
    p.n2 = make_norm(ps, prefix + ".norm2", cfg.normalization, cfg.filters);
    if (cfg.attention) {
        // Reduction ratio 8, stepped down to the largest divisor of the
        // channel count for narrow blocks.
        int reduction = std::min(8, cfg.filters);
        while (cfg.filters % reduction != 0) --reduction;
        p.attn = make_channel_attention(ps, prefix + ".attn", cfg.filters, reduction, rng);
    }
    return p;
}

NodeId conv_block(Tape& t, NodeId x, const ConvBlockParams& p, const RunCtx& ctx, int stride) {
    if (t.val(x).rank() == 4) throw std::runtime_error("use recurrent variant");
    if (t.val(x).rank() != 3) throw std::runtime_error("conv block expects rank-3 input");

    NodeId y = t.conv2d(x, t.param(*p.c1.w), t.param(*p.c1.b), stride);
    y = apply_norm(t, y, p.n1);
    y = apply_activation(t, y, p.cfg.activation);
    y = maybe_dropout(t, y, p.cfg.dropout_rate, ctx);

    y = t.conv2d(y, t.param(*p.c2.w), t.param(*p.c2.b));
    y = apply_norm(t, y, p.n2);
    y = apply_activation(t, y, p.cfg.activation);
    y = maybe_dropout(t, y, p.cfg.dropout_rate, ctx);

    if (p.attn) y = channel_attention(t, y, *p.attn);
    return y;
}

NodeId residual_block(Tape& t, NodeId x, const ConvBlockParams& p, const RunCtx& ctx) {
    if (t.val(x).rank() != 3 || t.val(x).dim(2) != p.cfg.filters)
        throw std::runtime_error("skip shape mismatch");
    return t.add(x, conv_block(t, x, p, ctx));
}

DenseBlockParams make_dense_block(ParamStore& ps, const std::string& prefix, int in_channels,
                                  const BlockConfig& cfg, int growth, int layers, Rng& rng) {
    DenseBlockParams p;
    p.cfg = cfg;
    p.in_channels = in_channels;
    p.growth = growth;
    int c = in_channels;
    for (int i = 0; i < layers; ++i) {
        p.layers.push_back(
            make_conv_layer(ps, prefix + ".layer" + std::to_string(i), c, growth, cfg.kernel, rng));
        c += growth;
    }
    return p;
}

NodeId dense_block(Tape& t, NodeId x, const DenseBlockParams& p, const RunCtx& ctx) {
    NodeId cur = x;
    for (const auto& layer : p.layers) {
        NodeId y = t.conv2d(cur, t.param(*layer.w), t.param(*layer.b));
        y = apply_activation(t, y, p.cfg.activation);
        y = maybe_dropout(t, y, p.cfg.dropout_rate, ctx);
        cur = t.concat_channels({cur, y});
    }
    return cur;
}

ConvNextBlockParams make_convnext_block(ParamStore& ps, const std::string& prefix, int channels,
                                        Rng& rng) {
    ConvNextBlockParams p;
    p.channels = channels;
    p.dw_w = &ps.create(prefix + ".dw.w", {7, 7, channels});
    p.dw_b = &ps.create(prefix + ".dw.b", {channels});
    init_he_normal(*p.dw_w, 49, rng);
    p.ln = make_norm(ps, prefix + ".ln", NormKind::Layer, channels);
    p.pw1 = make_conv_layer(ps, prefix + ".pw1", channels, 4 * channels, 1, rng);
    p.pw2 = make_conv_layer(ps, prefix + ".pw2", 4 * channels, channels, 1, rng);
    return p;
}

NodeId convnext_block(Tape& t, NodeId x, const ConvNextBlockParams& p) {
    if (t.val(x).rank() != 3 || t.val(x).dim(2) != p.channels)
        throw std::runtime_error("skip shape mismatch");
    NodeId y = t.depthwise_conv2d(x, t.param(*p.dw_w), t.param(*p.dw_b));
    y = apply_norm(t, y, p.ln);
    y = t.conv2d(y, t.param(*p.pw1.w), t.param(*p.pw1.b));
    y = t.gelu(y);
    y = t.conv2d(y, t.param(*p.pw2.w), t.param(*p.pw2.b));
    return t.add(x, y);
}

ConvLstmParams make_convlstm(ParamStore& ps, const std::string& prefix, int in_channels, int hidden,
                             int kernel, Rng& rng) {
    ConvLstmParams p;
    p.in_channels = in_channels;
    p.hidden = hidden;
    p.kernel = kernel;
    p.w = &ps.create(prefix + ".w", {kernel, kernel, in_channels + hidden, 4 * hidden});
    p.b = &ps.create(prefix + ".b", {4 * hidden});
    init_he_normal(*p.w, kernel * kernel * (in_channels + hidden), rng);
    // Forget-gate bias starts at 1 so early training does not wipe the cell.
    for (int i = hidden; i < 2 * hidden; ++i) p.b->value[i] = 1.0;
    return p;
}

LstmState convlstm_step(Tape& t, NodeId x_t, LstmState prev, const ConvLstmParams& p) {
    const Tensor& vx = t.val(x_t);
    const Tensor& vh = t.val(prev.h);
    const Tensor& vc = t.val(prev.c);
    if (vx.rank() != 3 || vh.rank() != 3 || vc.rank() != 3 || vx.dim(0) != vh.dim(0) ||
        vx.dim(1) != vh.dim(1) || vh.dim(0) != vc.dim(0) || vh.dim(1) != vc.dim(1) ||
        vh.dim(2) != p.hidden || vc.dim(2) != p.hidden)
        throw std::runtime_error("state shape mismatch");

    NodeId z = t.concat_channels({x_t, prev.h});
    z = t.conv2d(z, t.param(*p.w), t.param(*p.b));
    const int hdn = p.hidden;
    NodeId i_gate = t.sigmoid(t.slice_channels(z, 0, hdn));
    NodeId f_gate = t.sigmoid(t.slice_channels(z, hdn, hdn));
    NodeId o_gate = t.sigmoid(t.slice_channels(z, 2 * hdn, hdn));
    NodeId g_gate = t.tanh(t.slice_channels(z, 3 * hdn, hdn));

    NodeId c_t = t.add(t.mul(f_gate, prev.c), t.mul(i_gate, g_gate));
    NodeId h_t = t.mul(o_gate, t.tanh(c_t));
    return {h_t, c_t};
}

RecurrentBlockParams make_recurrent_block(ParamStore& ps, const std::string& prefix, int in_channels,
                                          const BlockConfig& cfg, Rng& rng) {
    RecurrentBlockParams p;
    p.dropout_rate = cfg.dropout_rate;
    p.l1 = make_convlstm(ps, prefix + ".lstm1", in_channels, cfg.filters, cfg.kernel, rng);
    p.l2 = make_convlstm(ps, prefix + ".lstm2", cfg.filters, cfg.filters, cfg.kernel, rng);
    return p;
}

std::vector<NodeId> recurrent_block(Tape& t, const std::vector<NodeId>& seq,
                                    const RecurrentBlockParams& p, const RunCtx& ctx) {
    if (seq.empty()) throw std::runtime_error("empty sequence");
    const Tensor& first = t.val(seq[0]);
    const std::vector<int> state_shape = {first.dim(0), first.dim(1), p.l1.hidden};

    std::vector<NodeId> mid;
    LstmState s1{t.constant(Tensor(state_shape)), t.constant(Tensor(state_shape))};
    for (NodeId x_t : seq) {
        s1 = convlstm_step(t, x_t, s1, p.l1);
        mid.push_back(maybe_dropout(t, s1.h, p.dropout_rate, ctx));
    }
    std::vector<NodeId> out;
    LstmState s2{t.constant(Tensor(state_shape)), t.constant(Tensor(state_shape))};
    for (NodeId x_t : mid) {
        s2 = convlstm_step(t, x_t, s2, p.l2);
        out.push_back(s2.h);
    }
    return out;
}

LocalizedConvParams make_localized_conv_block(ParamStore& ps, const std::string& prefix, int y,
                                              int x, int in_channels, int bottleneck,
                                              int out_channels, int kernel, Rng& rng) {
    LocalizedConvParams p;
    p.kernel = kernel;
    p.bottleneck = make_conv_layer(ps, prefix + ".bottleneck", in_channels, bottleneck, 1, rng);
    p.w = &ps.create(prefix + ".local.w", {y, x, kernel, kernel, bottleneck, out_channels});
    p.b = &ps.create(prefix + ".local.b", {y, x, out_channels});
    init_he_normal(*p.w, kernel * kernel * bottleneck, rng);
    return p;
}

NodeId localized_conv_block(Tape& t, NodeId x, const LocalizedConvParams& p) {
    NodeId y = t.conv2d(x, t.param(*p.bottleneck.w), t.param(*p.bottleneck.b));
    return t.local_conv2d(y, t.param(*p.w), t.param(*p.b));
}

UpsampleParams make_upsample(ParamStore& ps, const std::string& prefix, Upsampling kind, int in_ch,
                             int out_ch, int scale, int kernel, Rng& rng) {
    if (kind == Upsampling::PIN) throw std::runtime_error("PIN has no upsampling block");
    UpsampleParams p;
    p.kind = kind;
    p.scale = scale;
    p.out_channels = out_ch;
    const int conv_out = kind == Upsampling::SPC ? out_ch * scale * scale : out_ch;
    p.conv = make_conv_layer(ps, prefix + ".conv", in_ch, conv_out, kernel, rng);
    return p;
}

NodeId upsample(Tape& t, NodeId x, const UpsampleParams& p) {
    switch (p.kind) {
        case Upsampling::SPC: {
            NodeId y = t.conv2d(x, t.param(*p.conv.w), t.param(*p.conv.b));
            return t.phase_shift(y, p.scale);
        }
        case Upsampling::DC: {
            NodeId y = t.zero_stuff(x, p.scale);
            return t.conv2d(y, t.param(*p.conv.w), t.param(*p.conv.b));
        }
        case Upsampling::RC: {
            NodeId y = t.resize_bilinear(x, p.scale);
            return t.conv2d(y, t.param(*p.conv.w), t.param(*p.conv.b));
        }
        default: throw std::runtime_error("PIN has no upsampling block");
    }
}

std::pair<NodeId, NodeId> encoder_block(Tape& t, NodeId x, const ConvBlockParams& p,
                                        const RunCtx& ctx) {
    NodeId features = conv_block(t, x, p, ctx);
    return {t.max_pool2(features), features};
}

NodeId decoder_block(Tape& t, NodeId x, NodeId skip, const ConvBlockParams& p, const RunCtx& ctx) {
    NodeId up = t.resize_bilinear(x, 2);
    const Tensor& vu = t.val(up);
    const Tensor& vs = t.val(skip);
    if (vu.dim(0) != vs.dim(0) || vu.dim(1) != vs.dim(1))
        throw std::runtime_error("skip shape mismatch");
    return conv_block(t, t.concat_channels({up, skip}), p, ctx);
}

}  // namespace dsc::nn
