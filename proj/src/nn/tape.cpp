#include "dsc/nn/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace dsc::nn {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

// ---------------------------------------------------------------- ParamStore

Param& ParamStore::create(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value = Tensor(shape);
    p->grad = Tensor(std::move(shape));
    index_[name] = items_.size();
    items_.push_back(std::move(p));
    return *items_.back();
}

Param& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("unknown parameter: " + name);
    return *items_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("unknown parameter: " + name);
    return *items_[it->second];
}

void ParamStore::zero_grads() {
    for (auto& p : items_) p->grad.fill(0.0);
}

std::int64_t ParamStore::total_parameters() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p->value.numel();
    return n;
}

// ---------------------------------------------------------------------- Tape

NodeId Tape::push(Tensor value, std::vector<NodeId> inputs,
                  std::function<void(Tape&, NodeId)> back) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.back = std::move(back);
    n.wants_grad = any_tracked(n.inputs);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

bool Tape::any_tracked(const std::vector<NodeId>& ids) const {
    for (NodeId id : ids)
        if (nodes_[static_cast<std::size_t>(id)].wants_grad) return true;
    return false;
}

Tensor& Tape::grad_buf(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
}

const Tensor& Tape::grad(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) throw std::runtime_error("gradient not computed for node");
    return n.grad;
}

void Tape::reset() { nodes_.clear(); }

NodeId Tape::constant(Tensor v) { return push(std::move(v), {}, nullptr); }

NodeId Tape::input(Tensor v) {
    NodeId id = push(std::move(v), {}, nullptr);
    nodes_[static_cast<std::size_t>(id)].wants_grad = true;
    return id;
}

NodeId Tape::param(Param& p) {
    NodeId id = push(p.value, {}, nullptr);
    nodes_[static_cast<std::size_t>(id)].wants_grad = true;
    nodes_[static_cast<std::size_t>(id)].bound = &p;
    return id;
}

void Tape::backward(NodeId root) {
    if (val(root).numel() != 1) throw std::runtime_error("backward root must be scalar");

    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<NodeId> stack = {root};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        auto& flag = reachable[static_cast<std::size_t>(id)];
        if (flag) continue;
        flag = 1;
        for (NodeId in : nodes_[static_cast<std::size_t>(id)].inputs)
            if (nodes_[static_cast<std::size_t>(in)].wants_grad) stack.push_back(in);
    }

    grad_buf(root)[0] = 1.0;
    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!reachable[static_cast<std::size_t>(id)] || !n.wants_grad) continue;
        if (n.grad.data.empty()) continue;  // no gradient flowed here
        if (n.back) n.back(*this, id);
        if (n.bound) {
            for (std::int64_t i = 0; i < n.grad.numel(); ++i) n.bound->grad[i] += n.grad[i];
        }
    }
}

// ------------------------------------------------------------- elementwise

NodeId Tape::add(NodeId a, NodeId b) {
    if (!shapes_equal(val(a), val(b))) throw std::runtime_error("add: shape mismatch");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        if (t.tracked(a)) {
            Tensor& ga = t.grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.tracked(b)) {
            Tensor& gb = t.grad_buf(b);
            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    if (!shapes_equal(val(a), val(b))) throw std::runtime_error("sub: shape mismatch");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        if (t.tracked(a)) {
            Tensor& ga = t.grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.tracked(b)) {
            Tensor& gb = t.grad_buf(b);
            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    if (!shapes_equal(val(a), val(b))) throw std::runtime_error("mul: shape mismatch");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.val(a);
        const Tensor& vb2 = t.val(b);
        if (t.tracked(a)) {
            Tensor& ga = t.grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb2[i];
        }
        if (t.tracked(b)) {
            Tensor& gb = t.grad_buf(b);
            for (std::int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

NodeId Tape::div(NodeId a, NodeId b) {
    if (!shapes_equal(val(a), val(b))) throw std::runtime_error("div: shape mismatch");
    Tensor out = val(a);
    const Tensor& vb = val(b);
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] /= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& va = t.val(a);
        const Tensor& vb2 = t.val(b);
        if (t.tracked(a)) {
            Tensor& ga = t.grad_buf(a);
            for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / vb2[i];
        }
        if (t.tracked(b)) {
            Tensor& gb = t.grad_buf(b);
            for (std::int64_t i = 0; i < g.numel(); ++i)
                gb[i] -= g[i] * va[i] / (vb2[i] * vb2[i]);
        }
    });
}

NodeId Tape::unary_map(NodeId a, const std::function<double(double)>& f,
                       const std::function<double(double, double)>& dfdx) {
    Tensor out = val(a);
    for (double& v : out.data) v = f(v);
    return push(std::move(out), {a}, [a, dfdx](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        const Tensor& x = t.val(a);
        const Tensor& y = t.val(self);
        Tensor& ga = t.grad_buf(a);
        for (std::int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
    });
}

NodeId Tape::scale(NodeId a, double k) {
    return unary_map(
        a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

NodeId Tape::add_scalar(NodeId a, double k) {
    return unary_map(
        a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

NodeId Tape::abs(NodeId a) {
    return unary_map(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

NodeId Tape::log(NodeId a) {
    return unary_map(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

NodeId Tape::pow_scalar(NodeId a, double e) {
    return unary_map(
        a, [e](double x) { return std::pow(x, e); },
        [e](double x, double) { return e * std::pow(x, e - 1.0); });
}

NodeId Tape::relu(NodeId a) {
    return unary_map(
        a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

NodeId Tape::gelu(NodeId a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return unary_map(
        a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [=](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
        });
}

NodeId Tape::sigmoid(NodeId a) {
    return unary_map(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

NodeId Tape::tanh(NodeId a) {
    return unary_map(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

NodeId Tape::clamp(NodeId a, double lo, double hi) {
    return unary_map(
        a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- structure

NodeId Tape::concat_channels(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw std::runtime_error("concat of nothing");
    const Tensor& first = val(xs[0]);
    if (first.rank() != 3) throw std::runtime_error("concat expects rank-3 tensors");
    const int h = first.dim(0), w = first.dim(1);
    int c_total = 0;
    for (NodeId id : xs) {
        const Tensor& v = val(id);
        if (v.rank() != 3 || v.dim(0) != h || v.dim(1) != w)
            throw std::runtime_error("concat: spatial dims mismatch");
        c_total += v.dim(2);
    }
    Tensor out({h, w, c_total});
    int base = 0;
    for (NodeId id : xs) {
        const Tensor& v = val(id);
        const int c = v.dim(2);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < c; ++k) out.at(i, j, base + k) = v.at(i, j, k);
        base += c;
    }
    return push(std::move(out), xs, [xs](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const int h = g.dim(0), w = g.dim(1);
        int base = 0;
        for (NodeId id : xs) {
            const int c = t.val(id).dim(2);
            if (t.tracked(id)) {
                Tensor& gi = t.grad_buf(id);
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j)
                        for (int k = 0; k < c; ++k) gi.at(i, j, k) += g.at(i, j, base + k);
            }
            base += c;
        }
    });
}

NodeId Tape::slice_channels(NodeId a, int from, int count) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("slice expects rank-3");
    if (from < 0 || from + count > v.dim(2)) throw std::runtime_error("slice out of range");
    const int h = v.dim(0), w = v.dim(1);
    Tensor out({h, w, count});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < count; ++k) out.at(i, j, k) = v.at(i, j, from + k);
    return push(std::move(out), {a}, [a, from, count](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < g.dim(0); ++i)
            for (int j = 0; j < g.dim(1); ++j)
                for (int k = 0; k < count; ++k) ga.at(i, j, from + k) += g.at(i, j, k);
    });
}

NodeId Tape::pad_channels(NodeId a, int out_channels) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("pad expects rank-3");
    const int c = v.dim(2);
    if (out_channels < c) throw std::runtime_error("pad: fewer channels than input");
    Tensor out({v.dim(0), v.dim(1), out_channels});
    for (int i = 0; i < v.dim(0); ++i)
        for (int j = 0; j < v.dim(1); ++j)
            for (int k = 0; k < c; ++k) out.at(i, j, k) = v.at(i, j, k);
    return push(std::move(out), {a}, [a, c](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < g.dim(0); ++i)
            for (int j = 0; j < g.dim(1); ++j)
                for (int k = 0; k < c; ++k) ga.at(i, j, k) += g.at(i, j, k);
    });
}

NodeId Tape::broadcast_mul_channels(NodeId x, NodeId s) {
    const Tensor& vx = val(x);
    const Tensor& vs = val(s);
    if (vx.rank() != 3 || vs.rank() != 3 || vs.dim(0) != 1 || vs.dim(1) != 1 ||
        vs.dim(2) != vx.dim(2))
        throw std::runtime_error("broadcast_mul: expected (h,w,c) x (1,1,c)");
    Tensor out = vx;
    const int h = vx.dim(0), w = vx.dim(1), c = vx.dim(2);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) out.at(i, j, k) *= vs.at(0, 0, k);
    return push(std::move(out), {x, s}, [x, s](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& vx2 = t.val(x);
        const Tensor& vs2 = t.val(s);
        const int h = g.dim(0), w = g.dim(1), c = g.dim(2);
        if (t.tracked(x)) {
            Tensor& gx = t.grad_buf(x);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    for (int k = 0; k < c; ++k) gx.at(i, j, k) += g.at(i, j, k) * vs2.at(0, 0, k);
        }
        if (t.tracked(s)) {
            Tensor& gs = t.grad_buf(s);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    for (int k = 0; k < c; ++k) gs.at(0, 0, k) += g.at(i, j, k) * vx2.at(i, j, k);
        }
    });
}

NodeId Tape::phase_shift(NodeId a, int s) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("phase shift expects rank-3");
    const int c_in = v.dim(2);
    if (s < 1 || c_in % (s * s) != 0) throw std::runtime_error("bad channel count for phase shift");
    const int h = v.dim(0), w = v.dim(1), c_out = c_in / (s * s);
    Tensor out({h * s, w * s, c_out});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < c_out; ++c)
                for (int di = 0; di < s; ++di)
                    for (int dj = 0; dj < s; ++dj)
                        out.at(i * s + di, j * s + dj, c) = v.at(i, j, c * s * s + di * s + dj);
    return push(std::move(out), {a}, [a, s, h, w, c_out](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int c = 0; c < c_out; ++c)
                    for (int di = 0; di < s; ++di)
                        for (int dj = 0; dj < s; ++dj)
                            ga.at(i, j, c * s * s + di * s + dj) +=
                                g.at(i * s + di, j * s + dj, c);
    });
}

NodeId Tape::zero_stuff(NodeId a, int s) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("zero_stuff expects rank-3");
    const int h = v.dim(0), w = v.dim(1), c = v.dim(2);
    Tensor out({h * s, w * s, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) out.at(i * s, j * s, k) = v.at(i, j, k);
    return push(std::move(out), {a}, [a, s, h, w, c](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < c; ++k) ga.at(i, j, k) += g.at(i * s, j * s, k);
    });
}

namespace {

struct LerpIndex {
    int i0, i1;
    double w1;
};

std::vector<LerpIndex> bilinear_axis(int in, int out) {
    std::vector<LerpIndex> v(static_cast<std::size_t>(out));
    const double r = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double f = (o + 0.5) * r - 0.5;
        if (f < 0) f = 0;
        if (f > in - 1) f = in - 1;
        int i0 = static_cast<int>(std::floor(f));
        if (i0 > in - 2) i0 = in >= 2 ? in - 2 : 0;
        const int i1 = in >= 2 ? i0 + 1 : 0;
        v[static_cast<std::size_t>(o)] = {i0, i1, f - i0};
    }
    return v;
}

}  // namespace

NodeId Tape::resize_bilinear(NodeId a, int s) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("resize expects rank-3");
    const int h = v.dim(0), w = v.dim(1), c = v.dim(2);
    const auto ay = bilinear_axis(h, h * s);
    const auto ax = bilinear_axis(w, w * s);
    Tensor out({h * s, w * s, c});
    for (int i = 0; i < h * s; ++i)
        for (int j = 0; j < w * s; ++j) {
            const auto& ry = ay[static_cast<std::size_t>(i)];
            const auto& rx = ax[static_cast<std::size_t>(j)];
            for (int k = 0; k < c; ++k)
                out.at(i, j, k) =
                    (1 - ry.w1) * ((1 - rx.w1) * v.at(ry.i0, rx.i0, k) + rx.w1 * v.at(ry.i0, rx.i1, k)) +
                    ry.w1 * ((1 - rx.w1) * v.at(ry.i1, rx.i0, k) + rx.w1 * v.at(ry.i1, rx.i1, k));
        }
    return push(std::move(out), {a}, [a, ay, ax, c](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < g.dim(0); ++i)
            for (int j = 0; j < g.dim(1); ++j) {
                const auto& ry = ay[static_cast<std::size_t>(i)];
                const auto& rx = ax[static_cast<std::size_t>(j)];
                for (int k = 0; k < c; ++k) {
                    const double gv = g.at(i, j, k);
                    ga.at(ry.i0, rx.i0, k) += (1 - ry.w1) * (1 - rx.w1) * gv;
                    ga.at(ry.i0, rx.i1, k) += (1 - ry.w1) * rx.w1 * gv;
                    ga.at(ry.i1, rx.i0, k) += ry.w1 * (1 - rx.w1) * gv;
                    ga.at(ry.i1, rx.i1, k) += ry.w1 * rx.w1 * gv;
                }
            }
    });
}

NodeId Tape::avg_pool2(NodeId a) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("pool expects rank-3");
    const int h = v.dim(0) / 2, w = v.dim(1) / 2, c = v.dim(2);
    if (h < 1 || w < 1) throw std::runtime_error("grid too small for pooling");
    Tensor out({h, w, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k)
                out.at(i, j, k) = 0.25 * (v.at(2 * i, 2 * j, k) + v.at(2 * i, 2 * j + 1, k) +
                                          v.at(2 * i + 1, 2 * j, k) + v.at(2 * i + 1, 2 * j + 1, k));
    return push(std::move(out), {a}, [a, h, w, c](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < c; ++k) {
                    const double gv = 0.25 * g.at(i, j, k);
                    ga.at(2 * i, 2 * j, k) += gv;
                    ga.at(2 * i, 2 * j + 1, k) += gv;
                    ga.at(2 * i + 1, 2 * j, k) += gv;
                    ga.at(2 * i + 1, 2 * j + 1, k) += gv;
                }
    });
}

NodeId Tape::max_pool2(NodeId a) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("pool expects rank-3");
    if (v.dim(0) % 2 != 0 || v.dim(1) % 2 != 0)
        throw std::runtime_error("spatial dims must be even for pooling");
    const int h = v.dim(0) / 2, w = v.dim(1) / 2, c = v.dim(2);
    Tensor out({h, w, c});
    std::vector<std::int32_t> arg(static_cast<std::size_t>(out.numel()));
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = 0;
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        const double x = v.at(2 * i + di, 2 * j + dj, k);
                        if (x > best) {
                            best = x;
                            best_idx = di * 2 + dj;
                        }
                    }
                out.at(i, j, k) = best;
                arg[static_cast<std::size_t>((static_cast<std::int64_t>(i) * w + j) * c + k)] =
                    best_idx;
            }
    return push(std::move(out), {a}, [a, h, w, c, arg = std::move(arg)](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < c; ++k) {
                    const int idx =
                        arg[static_cast<std::size_t>((static_cast<std::int64_t>(i) * w + j) * c + k)];
                    ga.at(2 * i + idx / 2, 2 * j + idx % 2, k) += g.at(i, j, k);
                }
    });
}

NodeId Tape::global_avg_pool(NodeId a) {
    const Tensor& v = val(a);
    if (v.rank() != 3) throw std::runtime_error("pool expects rank-3");
    const int h = v.dim(0), w = v.dim(1), c = v.dim(2);
    Tensor out({1, 1, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < c; ++k) out.at(0, 0, k) += v.at(i, j, k);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int k = 0; k < c; ++k) out.at(0, 0, k) *= inv;
    return push(std::move(out), {a}, [a, h, w, c, inv](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad_buf(a);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                for (int k = 0; k < c; ++k) ga.at(i, j, k) += g.at(0, 0, k) * inv;
    });
}

// -------------------------------------------------------------- convolution

namespace {

struct ConvGeom {
    int out_h, out_w, pad_top, pad_left;
};

ConvGeom same_geometry(int h, int w, int k, int stride) {
    ConvGeom g;
    g.out_h = (h + stride - 1) / stride;
    g.out_w = (w + stride - 1) / stride;
    const int pad_h = std::max((g.out_h - 1) * stride + k - h, 0);
    const int pad_w = std::max((g.out_w - 1) * stride + k - w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
    return g;
}

void im2col(const Tensor& x, int k, int stride, const ConvGeom& geom, std::vector<double>& m) {
    const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const std::int64_t cols = static_cast<std::int64_t>(k) * k * c;
    m.assign(static_cast<std::size_t>(geom.out_h) * geom.out_w * cols, 0.0);
    for (int oy = 0; oy < geom.out_h; ++oy)
        for (int ox = 0; ox < geom.out_w; ++ox) {
            double* row = m.data() + (static_cast<std::int64_t>(oy) * geom.out_w + ox) * cols;
            for (int ki = 0; ki < k; ++ki) {
                const int iy = oy * stride - geom.pad_top + ki;
                if (iy < 0 || iy >= h) continue;
                for (int kj = 0; kj < k; ++kj) {
                    const int ix = ox * stride - geom.pad_left + kj;
                    if (ix < 0 || ix >= w) continue;
                    const double* src = &x.data[(static_cast<std::size_t>(iy) * w + ix) * c];
                    double* dst = row + (static_cast<std::int64_t>(ki) * k + kj) * c;
                    for (int ci = 0; ci < c; ++ci) dst[ci] = src[ci];
                }
            }
        }
}

void col2im(const std::vector<double>& m, int k, int stride, const ConvGeom& geom, Tensor& gx) {
    const int h = gx.dim(0), w = gx.dim(1), c = gx.dim(2);
    const std::int64_t cols = static_cast<std::int64_t>(k) * k * c;
    for (int oy = 0; oy < geom.out_h; ++oy)
        for (int ox = 0; ox < geom.out_w; ++ox) {
            const double* row = m.data() + (static_cast<std::int64_t>(oy) * geom.out_w + ox) * cols;
            for (int ki = 0; ki < k; ++ki) {
                const int iy = oy * stride - geom.pad_top + ki;
                if (iy < 0 || iy >= h) continue;
                for (int kj = 0; kj < k; ++kj) {
                    const int ix = ox * stride - geom.pad_left + kj;
                    if (ix < 0 || ix >= w) continue;
                    double* dst = &gx.data[(static_cast<std::size_t>(iy) * w + ix) * c];
                    const double* src = row + (static_cast<std::int64_t>(ki) * k + kj) * c;
                    for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
                }
            }
        }
}

}  // namespace

NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, int stride) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(b);
    if (vx.rank() != 3) throw std::runtime_error("conv2d expects rank-3 input");
    if (vw.rank() != 4) throw std::runtime_error("conv2d expects (k,k,ci,co) weights");
    const int k = vw.dim(0), ci = vw.dim(2), co = vw.dim(3);
    if (vw.dim(1) != k) throw std::runtime_error("conv2d expects square kernels");
    if (vx.dim(2) != ci) throw std::runtime_error("conv2d: input channel mismatch");
    if (vb.numel() != co) throw std::runtime_error("conv2d: bias size mismatch");

    const ConvGeom geom = same_geometry(vx.dim(0), vx.dim(1), k, stride);
    const std::int64_t rows = static_cast<std::int64_t>(geom.out_h) * geom.out_w;
    const std::int64_t cols = static_cast<std::int64_t>(k) * k * ci;

    auto m = std::make_shared<std::vector<double>>();
    im2col(vx, k, stride, geom, *m);

    Tensor out({geom.out_h, geom.out_w, co});
    {
        ConstMapRM M(m->data(), rows, cols);
        ConstMapRM W(vw.data.data(), cols, co);
        MapRM Y(out.data.data(), rows, co);
        Y.noalias() = M * W;
        for (std::int64_t r = 0; r < rows; ++r)
            for (int oc = 0; oc < co; ++oc) out[r * co + oc] += vb[oc];
    }

    return push(std::move(out), {x, w, b},
                [x, w, b, m, k, stride, geom, rows, cols, co](Tape& t, NodeId self) {
                    const Tensor& g = t.grad(self);
                    ConstMapRM Gy(g.data.data(), rows, co);
                    if (t.tracked(w)) {
                        Tensor& gw = t.grad_buf(w);
                        ConstMapRM M(m->data(), rows, cols);
                        MapRM Gw(gw.data.data(), cols, co);
                        Gw.noalias() += M.transpose() * Gy;
                    }
                    if (t.tracked(b)) {
                        Tensor& gb = t.grad_buf(b);
                        for (std::int64_t r = 0; r < rows; ++r)
                            for (int oc = 0; oc < co; ++oc) gb[oc] += g[r * co + oc];
                    }
                    if (t.tracked(x)) {
                        const Tensor& vw2 = t.val(w);
                        ConstMapRM W(vw2.data.data(), cols, co);
                        std::vector<double> gm(static_cast<std::size_t>(rows * cols));
                        MapRM Gm(gm.data(), rows, cols);
                        Gm.noalias() = Gy * W.transpose();
                        col2im(gm, k, stride, geom, t.grad_buf(x));
                    }
                });
}

NodeId Tape::depthwise_conv2d(NodeId x, NodeId w, NodeId b) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(b);
    if (vx.rank() != 3 || vw.rank() != 3) throw std::runtime_error("depthwise: bad ranks");
    const int k = vw.dim(0), c = vx.dim(2);
    if (vw.dim(1) != k || vw.dim(2) != c || vb.numel() != c)
        throw std::runtime_error("depthwise: shape mismatch");
    const int h = vx.dim(0), width = vx.dim(1), p = k / 2;

    Tensor out({h, width, c});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < width; ++j)
            for (int ch = 0; ch < c; ++ch) {
                double acc = vb[ch];
                for (int ki = 0; ki < k; ++ki) {
                    const int iy = i + ki - p;
                    if (iy < 0 || iy >= h) continue;
                    for (int kj = 0; kj < k; ++kj) {
                        const int ix = j + kj - p;
                        if (ix < 0 || ix >= width) continue;
                        acc += vx.at(iy, ix, ch) * vw.at(ki, kj, ch);
                    }
                }
                out.at(i, j, ch) = acc;
            }
    return push(std::move(out), {x, w, b}, [x, w, b, k, p](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& vx2 = t.val(x);
        const Tensor& vw2 = t.val(w);
        const int h = vx2.dim(0), width = vx2.dim(1), c = vx2.dim(2);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < width; ++j)
                for (int ch = 0; ch < c; ++ch) {
                    const double gv = g.at(i, j, ch);
                    if (gv == 0.0) continue;
                    if (t.tracked(b)) t.grad_buf(b)[ch] += gv;
                    for (int ki = 0; ki < k; ++ki) {
                        const int iy = i + ki - p;
                        if (iy < 0 || iy >= h) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            const int ix = j + kj - p;
                            if (ix < 0 || ix >= width) continue;
                            if (t.tracked(w)) t.grad_buf(w).at(ki, kj, ch) += gv * vx2.at(iy, ix, ch);
                            if (t.tracked(x)) t.grad_buf(x).at(iy, ix, ch) += gv * vw2.at(ki, kj, ch);
                        }
                    }
                }
    });
}

NodeId Tape::local_conv2d(NodeId x, NodeId w, NodeId b) {
    const Tensor& vx = val(x);
    const Tensor& vw = val(w);
    const Tensor& vb = val(b);
    if (vx.rank() != 3 || vw.rank() != 6 || vb.rank() != 3)
        throw std::runtime_error("local conv: bad ranks");
    const int h = vx.dim(0), width = vx.dim(1), ci = vx.dim(2);
    const int k = vw.dim(2), co = vw.dim(5);
    if (vw.dim(0) != h || vw.dim(1) != width || vw.dim(3) != k || vw.dim(4) != ci ||
        vb.dim(0) != h || vb.dim(1) != width || vb.dim(2) != co)
        throw std::runtime_error("local conv: shape mismatch");
    const int p = k / 2;

    auto widx = [=](int i, int j, int ki, int kj, int c_in, int c_out) {
        return ((((static_cast<std::int64_t>(i) * width + j) * k + ki) * k + kj) * ci + c_in) * co +
               c_out;
    };

    Tensor out({h, width, co});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < width; ++j)
            for (int oc = 0; oc < co; ++oc) {
                double acc = vb.at(i, j, oc);
                for (int ki = 0; ki < k; ++ki) {
                    const int iy = i + ki - p;
                    if (iy < 0 || iy >= h) continue;
                    for (int kj = 0; kj < k; ++kj) {
                        const int ix = j + kj - p;
                        if (ix < 0 || ix >= width) continue;
                        for (int c_in = 0; c_in < ci; ++c_in)
                            acc += vx.at(iy, ix, c_in) * vw[widx(i, j, ki, kj, c_in, oc)];
                    }
                }
                out.at(i, j, oc) = acc;
            }
    return push(std::move(out), {x, w, b}, [x, w, b, k, p, widx](Tape& t, NodeId self) {
        const Tensor& g = t.grad(self);
        const Tensor& vx2 = t.val(x);
        const Tensor& vw2 = t.val(w);
        const int h = vx2.dim(0), width = vx2.dim(1), ci = vx2.dim(2);
        const int co = g.dim(2);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < width; ++j)
                for (int oc = 0; oc < co; ++oc) {
                    const double gv = g.at(i, j, oc);
                    if (gv == 0.0) continue;
                    if (t.tracked(b)) t.grad_buf(b).at(i, j, oc) += gv;
                    for (int ki = 0; ki < k; ++ki) {
                        const int iy = i + ki - p;
                        if (iy < 0 || iy >= h) continue;
                        for (int kj = 0; kj < k; ++kj) {
                            const int ix = j + kj - p;
                            if (ix < 0 || ix >= width) continue;
                            for (int c_in = 0; c_in < ci; ++c_in) {
                                if (t.tracked(w))
                                    t.grad_buf(w)[widx(i, j, ki, kj, c_in, oc)] +=
                                        gv * vx2.at(iy, ix, c_in);
                                if (t.tracked(x))
                                    t.grad_buf(x).at(iy, ix, c_in) +=
                                        gv * vw2[widx(i, j, ki, kj, c_in, oc)];
                            }
                        }
                    }
                }
    });
}

NodeId Tape::conv2d_valid_fixed(NodeId x, const Tensor& kernel) {
    const Tensor& vx = val(x);
    if (vx.rank() != 3 || kernel.rank() != 2) throw std::runtime_error("fixed conv: bad ranks");
    const int k = kernel.dim(0);
    const int h = vx.dim(0), w = vx.dim(1), c = vx.dim(2);
    if (kernel.dim(1) != k) throw std::runtime_error("fixed conv: square kernel required");
    if (h < k || w < k) throw std::runtime_error("grid too small for SSIM window");
    const int oh = h - k + 1, ow = w - k + 1;
    Tensor out({oh, ow, c});
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int ki = 0; ki < k; ++ki)
                    for (int kj = 0; kj < k; ++kj)
                        acc += vx.at(i + ki, j + kj, ch) * kernel.at(ki, kj);
                out.at(i, j, ch) = acc;
            }
    return push(std::move(out), {x}, [x, kernel, oh, ow, k](Tape& t, NodeId self) {
        if (!t.tracked(x)) return;
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_buf(x);
        const int c = g.dim(2);
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j)
                for (int ch = 0; ch < c; ++ch) {
                    const double gv = g.at(i, j, ch);
                    if (gv == 0.0) continue;
                    for (int ki = 0; ki < k; ++ki)
                        for (int kj = 0; kj < k; ++kj)
                            gx.at(i + ki, j + kj, ch) += gv * kernel.at(ki, kj);
                }
    });
}

// ------------------------------------------------------------ normalization

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& vx = val(x);
    const Tensor& vg = val(gamma);
    const Tensor& vb = val(beta);
    if (vx.rank() != 3) throw std::runtime_error("layer_norm expects rank-3");
    const int h = vx.dim(0), w = vx.dim(1), c = vx.dim(2);
    if (vg.numel() != c || vb.numel() != c) throw std::runtime_error("layer_norm: gamma/beta size");

    Tensor out({h, w, c});
    Tensor xhat({h, w, c});
    Tensor inv_std({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double mu = 0.0;
            for (int k = 0; k < c; ++k) mu += vx.at(i, j, k);
            mu /= c;
            double var = 0.0;
            for (int k = 0; k < c; ++k) {
                const double d = vx.at(i, j, k) - mu;
                var += d * d;
            }
            var /= c;
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std.at(i, j) = is;
            for (int k = 0; k < c; ++k) {
                const double xh = (vx.at(i, j, k) - mu) * is;
                xhat.at(i, j, k) = xh;
                out.at(i, j, k) = vg[k] * xh + vb[k];
            }
        }
    return push(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), h, w,
                 c](Tape& t, NodeId self) {
                    const Tensor& g = t.grad(self);
                    const Tensor& vg2 = t.val(gamma);
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w; ++j) {
                            double m1 = 0.0, m2 = 0.0;
                            for (int k = 0; k < c; ++k) {
                                const double dxh = g.at(i, j, k) * vg2[k];
                                m1 += dxh;
                                m2 += dxh * xhat.at(i, j, k);
                            }
                            m1 /= c;
                            m2 /= c;
                            if (t.tracked(x)) {
                                Tensor& gx = t.grad_buf(x);
                                for (int k = 0; k < c; ++k) {
                                    const double dxh = g.at(i, j, k) * vg2[k];
                                    gx.at(i, j, k) +=
                                        (dxh - m1 - xhat.at(i, j, k) * m2) * inv_std.at(i, j);
                                }
                            }
                            if (t.tracked(gamma)) {
                                Tensor& gg = t.grad_buf(gamma);
                                for (int k = 0; k < c; ++k)
                                    gg[k] += g.at(i, j, k) * xhat.at(i, j, k);
                            }
                            if (t.tracked(beta)) {
                                Tensor& gb = t.grad_buf(beta);
                                for (int k = 0; k < c; ++k) gb[k] += g.at(i, j, k);
                            }
                        }
                });
}

NodeId Tape::instance_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& vx = val(x);
    const Tensor& vg = val(gamma);
    const Tensor& vb = val(beta);
    if (vx.rank() != 3) throw std::runtime_error("instance_norm expects rank-3");
    const int h = vx.dim(0), w = vx.dim(1), c = vx.dim(2);
    if (vg.numel() != c || vb.numel() != c)
        throw std::runtime_error("instance_norm: gamma/beta size");
    const double n = static_cast<double>(h) * w;

    Tensor out({h, w, c});
    Tensor xhat({h, w, c});
    std::vector<double> inv_std(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) {
        double mu = 0.0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) mu += vx.at(i, j, k);
        mu /= n;
        double var = 0.0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const double d = vx.at(i, j, k) - mu;
                var += d * d;
            }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(k)] = is;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const double xh = (vx.at(i, j, k) - mu) * is;
                xhat.at(i, j, k) = xh;
                out.at(i, j, k) = vg[k] * xh + vb[k];
            }
    }
    return push(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), h, w, c,
                 n](Tape& t, NodeId self) {
                    const Tensor& g = t.grad(self);
                    const Tensor& vg2 = t.val(gamma);
                    for (int k = 0; k < c; ++k) {
                        double m1 = 0.0, m2 = 0.0;
                        for (int i = 0; i < h; ++i)
                            for (int j = 0; j < w; ++j) {
                                const double dxh = g.at(i, j, k) * vg2[k];
                                m1 += dxh;
                                m2 += dxh * xhat.at(i, j, k);
                            }
                        m1 /= n;
                        m2 /= n;
                        if (t.tracked(x)) {
                            Tensor& gx = t.grad_buf(x);
                            for (int i = 0; i < h; ++i)
                                for (int j = 0; j < w; ++j) {
                                    const double dxh = g.at(i, j, k) * vg2[k];
                                    gx.at(i, j, k) += (dxh - m1 - xhat.at(i, j, k) * m2) *
                                                      inv_std[static_cast<std::size_t>(k)];
                                }
                        }
                        if (t.tracked(gamma) || t.tracked(beta)) {
                            double gg = 0.0, gb = 0.0;
                            for (int i = 0; i < h; ++i)
                                for (int j = 0; j < w; ++j) {
                                    gg += g.at(i, j, k) * xhat.at(i, j, k);
                                    gb += g.at(i, j, k);
                                }
                            if (t.tracked(gamma)) t.grad_buf(gamma)[k] += gg;
                            if (t.tracked(beta)) t.grad_buf(beta)[k] += gb;
                        }
                    }
                });
}

NodeId Tape::dropout(NodeId x, double rate, Rng& stream) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw std::runtime_error("dropout rate must be < 1");
    const Tensor& vx = val(x);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(vx.shape);
    for (std::int64_t i = 0; i < mask.numel(); ++i)
        mask[i] = stream.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = vx;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    return push(std::move(out), {x}, [x, mask = std::move(mask)](Tape& t, NodeId self) {
        if (!t.tracked(x)) return;
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_buf(x);
        for (std::int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * mask[i];
    });
}

// --------------------------------------------------------------- reductions

NodeId Tape::sum(NodeId a) {
    const Tensor& v = val(a);
    double s = 0.0;
    for (double e : v.data) s += e;
    Tensor out({1});
    out[0] = s;
    return push(std::move(out), {a}, [a](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const double g = t.grad(self)[0];
        Tensor& ga = t.grad_buf(a);
        for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

NodeId Tape::mean(NodeId a) {
    const Tensor& v = val(a);
    double s = 0.0;
    for (double e : v.data) s += e;
    const double inv = 1.0 / static_cast<double>(v.numel());
    Tensor out({1});
    out[0] = s * inv;
    return push(std::move(out), {a}, [a, inv](Tape& t, NodeId self) {
        if (!t.tracked(a)) return;
        const double g = t.grad(self)[0] * inv;
        Tensor& ga = t.grad_buf(a);
        for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
}

}  // namespace dsc::nn
