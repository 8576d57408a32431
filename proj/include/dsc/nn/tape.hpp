#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace dsc::nn {

using NodeId = std::int32_t;

/// A named learnable tensor. Gradients accumulate across tape runs until
/// zero_grads(), which is how minibatch averaging works.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Ordered, named parameter collection. Creation order is deterministic for
/// a given architecture, which fixes the checkpoint layout.
class ParamStore {
public:
    Param& create(const std::string& name, std::vector<int> shape);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    void zero_grads();
    std::int64_t total_parameters() const;
    std::size_t size() const { return items_.size(); }
    Param& at(std::size_t i) { return *items_[i]; }
    const Param& at(std::size_t i) const { return *items_[i]; }

private:
    std::vector<std::unique_ptr<Param>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Reverse-mode autodiff over dense tensors. Each op records a closure that
/// pulls the output gradient back into its inputs; backward() walks nodes in
/// reverse creation order. Graphs are rebuilt per forward pass (define-by-
/// run), which keeps recurrent unrolling and GAN composition simple.
class Tape {
public:
    // ---- leaves ----
    NodeId constant(Tensor v);
    NodeId input(Tensor v);   // tracked: grad available after backward
    NodeId param(Param& p);   // tracked: grad accumulated into p.grad

    // ---- elementwise ----
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId scale(NodeId a, double k);
    NodeId add_scalar(NodeId a, double k);
    NodeId abs(NodeId a);
    NodeId log(NodeId a);
    NodeId pow_scalar(NodeId a, double e);
    NodeId relu(NodeId a);
    NodeId gelu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId tanh(NodeId a);
    NodeId clamp(NodeId a, double lo, double hi);

    // ---- structure ----
    NodeId concat_channels(const std::vector<NodeId>& xs);
    NodeId slice_channels(NodeId a, int from, int count);
    NodeId pad_channels(NodeId a, int out_channels);
    NodeId broadcast_mul_channels(NodeId x, NodeId s);
    NodeId phase_shift(NodeId a, int s);
    NodeId zero_stuff(NodeId a, int s);
    NodeId resize_bilinear(NodeId a, int s);
    NodeId avg_pool2(NodeId a);
    NodeId max_pool2(NodeId a);
    NodeId global_avg_pool(NodeId a);

    // ---- convolutions ----
    NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride = 1);
    NodeId depthwise_conv2d(NodeId x, NodeId w, NodeId b);
    NodeId local_conv2d(NodeId x, NodeId w, NodeId b);
    NodeId conv2d_valid_fixed(NodeId x, const Tensor& kernel);

    // ---- normalization / dropout ----
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId instance_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId dropout(NodeId x, double rate, Rng& stream);

    // ---- reductions ----
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);

    // ---- execution ----
    void backward(NodeId root);
    const Tensor& val(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& grad(NodeId id) const;
    bool tracked(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].wants_grad; }
    void reset();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        std::vector<NodeId> inputs;
        std::function<void(Tape&, NodeId)> back;
        Param* bound = nullptr;
        bool wants_grad = false;
    };

    std::vector<Node> nodes_;

    NodeId push(Tensor value, std::vector<NodeId> inputs, std::function<void(Tape&, NodeId)> back);
    Tensor& grad_buf(NodeId id);
    bool any_tracked(const std::vector<NodeId>& ids) const;
    NodeId unary_map(NodeId a, const std::function<double(double)>& f,
                     const std::function<double(double, double)>& dfdx);
};

}  // namespace dsc::nn
