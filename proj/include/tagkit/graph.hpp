#ifndef TAGKIT_GRAPH_HPP
#define TAGKIT_GRAPH_HPP

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "tagkit/tensor.hpp"

namespace tagkit {

// Named trainable tensor with its gradient and optimizer moments. Addresses
// must stay stable while graphs reference them; ParamSet guarantees that.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
    bool trainable = true;

    void ensure_grad() {
        if (grad.size() != value.size()) grad = Tensor::zeros(value.shape());
    }
    void zero_grad() { grad.fill(0.0); }
};

class ParamSet {
public:
    Param& create(const std::string& name, Tensor init);
    Param& get(const std::string& name);
    const Param& get(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<Param*> all();
    std::vector<const Param*> all() const;
    std::size_t total_count() const;
    void zero_grads();

private:
    std::deque<Param> params_;  // deque: stable addresses
};

struct Var {
    int id = -1;
};

// Reverse-mode tape. Build a fresh Graph per training/eval step; ops are
// recorded as they execute and backward() replays them in reverse.
class Graph {
public:
    // Leaves.
    Var constant(Tensor t);            // no gradient
    Var variable(Tensor t);            // gradient tracked, readable via grad()
    Var param(Param& p);               // gradient accumulated into p.grad
    Var frozen(const Param& p);        // parameter used as a constant

    // Elementwise.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var add_scalar(Var a, double s);
    Var mul_scalar(Var a, double s);
    Var mul_const(Var a, const Tensor& t);   // t: same shape, or n==1 broadcast
    Var add_const(Var a, const Tensor& t);
    Var square(Var a);
    Var elu(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var clamp01(Var a);
    Var round_st(Var a);               // forward rounds, backward passes through

    // Structure.
    Var reshape(Var a, Shape s);
    Var concat_c(const std::vector<Var>& parts);
    Var slice_n(Var a, int index);
    Var concat_n(const std::vector<Var>& parts);
    Var tile_spatial(Var a, int out_h, int out_w);
    Var pad_reflect(Var a, int pad_h, int pad_w);  // mirror-extend bottom/right
    Var crop_tl(Var a, int out_h, int out_w);      // keep the top-left window

    // Layers and transforms.
    Var conv2d(Var x, Var w, Var b, int stride, int pad);
    Var dense(Var x, Var w, Var b);
    Var resize_bilinear(Var x, int out_h, int out_w);
    Var gauss_blur(Var x, double sigma);
    Var dct8(Var x, bool inverse);

    // Reductions and losses.
    Var mean_all(Var a);
    Var sum_all(Var a);
    Var bce_mean(Var pred, const Tensor& target, double eps);

    const Tensor& val(Var v) const { return nodes_[v.id].val; }
    const Tensor& grad(Var v) const;

    // Backpropagate from a scalar output.
    void backward(Var out);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool needs_grad = false;
        bool grad_live = false;
        std::function<void()> back;
    };

    std::deque<Node> nodes_;

    Var make(Tensor val, bool needs_grad);
    Tensor& grad_buf(int id);
    void accumulate(int id, const Tensor& g);
    friend struct GraphOps;
};

}  // namespace tagkit

#endif
