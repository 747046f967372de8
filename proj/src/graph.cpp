#include "tagkit/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "tagkit/errors.hpp"

namespace tagkit {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

// ---- ParamSet ----

Param& ParamSet::create(const std::string& name, Tensor init) {
    if (has(name)) throw ConfigError("duplicate parameter name: " + name);
    Param p;
    p.name = name;
    p.value = std::move(init);
    p.ensure_grad();
    params_.push_back(std::move(p));
    return params_.back();
}

Param& ParamSet::get(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw ConfigError("unknown parameter: " + name);
}

const Param& ParamSet::get(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw ConfigError("unknown parameter: " + name);
}

bool ParamSet::has(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return true;
    return false;
}

std::vector<Param*> ParamSet::all() {
    std::vector<Param*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

std::vector<const Param*> ParamSet::all() const {
    std::vector<const Param*> out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
}

std::size_t ParamSet::total_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamSet::zero_grads() {
    for (auto& p : params_) p.zero_grad();
}

// ---- Graph basics ----

Var Graph::make(Tensor val, bool needs_grad) {
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size() - 1)};
}

Tensor& Graph::grad_buf(int id) {
    Node& n = nodes_[id];
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.val.shape());
        n.grad_live = true;
    }
    return n.grad;
}

void Graph::accumulate(int id, const Tensor& g) {
    Tensor& dst = grad_buf(id);
    const double* s = g.data();
    double* d = dst.data();
    for (std::size_t i = 0, e = dst.size(); i < e; ++i) d[i] += s[i];
}

const Tensor& Graph::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (!n.grad_live) throw NumericError("gradient was not computed for this node");
    return n.grad;
}

void Graph::backward(Var out) {
    Node& o = nodes_[out.id];
    if (o.val.size() != 1) throw ShapeError("backward requires a scalar output");
    grad_buf(out.id)[0] = 1.0;
    for (int i = out.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.grad_live && n.back) n.back();
    }
}

Var Graph::constant(Tensor t) { return make(std::move(t), false); }

Var Graph::variable(Tensor t) { return make(std::move(t), true); }

Var Graph::param(Param& p) {
    if (!p.trainable) return constant(p.value);
    p.ensure_grad();
    Var v = make(p.value, true);
    Param* pp = &p;
    Graph* g = this;
    int id = v.id;
    nodes_[id].back = [g, id, pp]() {
        const Tensor& gr = g->nodes_[id].grad;
        double* d = pp->grad.data();
        const double* s = gr.data();
        for (std::size_t i = 0, e = gr.size(); i < e; ++i) d[i] += s[i];
    };
    return v;
}

Var Graph::frozen(const Param& p) { return make(p.value, false); }

// ---- Elementwise ----

Var Graph::add(Var a, Var b) {
    require_same_shape(nodes_[a.id].val, nodes_[b.id].val, "add");
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id, ib = b.id;
        nodes_[id].back = [g, id, ia, ib]() {
            const Tensor& gr = g->nodes_[id].grad;
            if (g->nodes_[ia].needs_grad) g->accumulate(ia, gr);
            if (g->nodes_[ib].needs_grad) g->accumulate(ib, gr);
        };
    }
    return v;
}

Var Graph::sub(Var a, Var b) {
    require_same_shape(nodes_[a.id].val, nodes_[b.id].val, "sub");
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id, ib = b.id;
        nodes_[id].back = [g, id, ia, ib]() {
            const Tensor& gr = g->nodes_[id].grad;
            if (g->nodes_[ia].needs_grad) g->accumulate(ia, gr);
            if (g->nodes_[ib].needs_grad) {
                Tensor& dst = g->grad_buf(ib);
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= gr[i];
            }
        };
    }
    return v;
}

Var Graph::mul(Var a, Var b) {
    require_same_shape(nodes_[a.id].val, nodes_[b.id].val, "mul");
    const Tensor& ta = nodes_[a.id].val;
    const Tensor& tb = nodes_[b.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
    bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id, ib = b.id;
        nodes_[id].back = [g, id, ia, ib]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& va = g->nodes_[ia].val;
            const Tensor& vb = g->nodes_[ib].val;
            if (g->nodes_[ia].needs_grad) {
                Tensor& dst = g->grad_buf(ia);
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gr[i] * vb[i];
            }
            if (g->nodes_[ib].needs_grad) {
                Tensor& dst = g->grad_buf(ib);
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gr[i] * va[i];
            }
        };
    }
    return v;
}

Var Graph::add_scalar(Var a, double s) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + s;
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() { g->accumulate(ia, g->nodes_[id].grad); };
    }
    return v;
}

Var Graph::mul_scalar(Var a, double s) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * s;
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia, s]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gr[i] * s;
        };
    }
    return v;
}

namespace {

// Broadcast of a constant over the batch dimension only.
inline std::size_t bcast_index(const Shape& full, const Shape& cs, std::size_t i) {
    if (full == cs) return i;
    return i % cs.count();  // cs.n == 1, chw identical
}

void check_broadcastable(const Shape& full, const Shape& cs, const char* what) {
    if (full == cs) return;
    if (cs.n == 1 && cs.c == full.c && cs.h == full.h && cs.w == full.w) return;
    throw ShapeError(std::string(what) + ": constant " + cs.str() +
                     " not broadcastable to " + full.str());
}

}  // namespace

Var Graph::mul_const(Var a, const Tensor& t) {
    const Tensor& ta = nodes_[a.id].val;
    check_broadcastable(ta.shape(), t.shape(), "mul_const");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = ta[i] * t[bcast_index(ta.shape(), t.shape(), i)];
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        Tensor tc = t;
        nodes_[id].back = [g, id, ia, tc]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ia);
            const Shape& fs = dst.shape();
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += gr[i] * tc[bcast_index(fs, tc.shape(), i)];
        };
    }
    return v;
}

Var Graph::add_const(Var a, const Tensor& t) {
    const Tensor& ta = nodes_[a.id].val;
    check_broadcastable(ta.shape(), t.shape(), "add_const");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = ta[i] + t[bcast_index(ta.shape(), t.shape(), i)];
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() { g->accumulate(ia, g->nodes_[id].grad); };
    }
    return v;
}

Var Graph::square(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * ta[i];
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& va = g->nodes_[ia].val;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += 2.0 * va[i] * gr[i];
        };
    }
    return v;
}

Var Graph::elu(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = ta[i] > 0.0 ? ta[i] : std::expm1(ta[i]);
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& va = g->nodes_[ia].val;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += gr[i] * (va[i] > 0.0 ? 1.0 : std::exp(va[i]));
        };
    }
    return v;
}

Var Graph::tanh(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ta[i]);
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& vo = g->nodes_[id].val;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += gr[i] * (1.0 - vo[i] * vo[i]);
        };
    }
    return v;
}

Var Graph::sigmoid(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-ta[i]));
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& vo = g->nodes_[id].val;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += gr[i] * vo[i] * (1.0 - vo[i]);
        };
    }
    return v;
}

Var Graph::clamp01(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(ta[i], 0.0, 1.0);
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& va = g->nodes_[ia].val;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i)
                if (va[i] >= 0.0 && va[i] <= 1.0) dst[i] += gr[i];
        };
    }
    return v;
}

Var Graph::round_st(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::round(ta[i]);
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        // Straight-through: rounding is treated as identity in backward.
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() { g->accumulate(ia, g->nodes_[id].grad); };
    }
    return v;
}

// ---- Structure ----

Var Graph::reshape(Var a, Shape s) {
    const Tensor& ta = nodes_[a.id].val;
    Tensor out = ta.reshaped(s);
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gr[i];
        };
    }
    return v;
}

Var Graph::concat_c(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_c: empty list");
    const Shape& s0 = nodes_[parts[0].id].val.shape();
    int ctot = 0;
    bool ng = false;
    for (Var p : parts) {
        const Shape& s = nodes_[p.id].val.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw ShapeError("concat_c: incompatible " + s.str() + " vs " + s0.str());
        ctot += s.c;
        ng = ng || nodes_[p.id].needs_grad;
    }
    Shape os{s0.n, ctot, s0.h, s0.w};
    Tensor out(os);
    std::size_t plane = std::size_t(s0.h) * s0.w;
    for (int n = 0; n < s0.n; ++n) {
        int co = 0;
        for (Var p : parts) {
            const Tensor& tp = nodes_[p.id].val;
            int pc = tp.shape().c;
            const double* src = tp.data() + std::size_t(n) * pc * plane;
            double* dst = out.data() + (std::size_t(n) * ctot + co) * plane;
            std::copy(src, src + std::size_t(pc) * plane, dst);
            co += pc;
        }
    }
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id;
        std::vector<int> srcs;
        for (Var p : parts) srcs.push_back(p.id);
        nodes_[id].back = [g, id, srcs, s0, ctot, plane]() {
            const Tensor& gr = g->nodes_[id].grad;
            for (int n = 0; n < s0.n; ++n) {
                int co = 0;
                for (int sid : srcs) {
                    int pc = g->nodes_[sid].val.shape().c;
                    if (g->nodes_[sid].needs_grad) {
                        Tensor& dst = g->grad_buf(sid);
                        const double* src = gr.data() + (std::size_t(n) * ctot + co) * plane;
                        double* d = dst.data() + std::size_t(n) * pc * plane;
                        for (std::size_t i = 0; i < std::size_t(pc) * plane; ++i) d[i] += src[i];
                    }
                    co += pc;
                }
            }
        };
    }
    return v;
}

Var Graph::slice_n(Var a, int index) {
    const Tensor& ta = nodes_[a.id].val;
    const Shape& s = ta.shape();
    if (index < 0 || index >= s.n) throw ShapeError("slice_n: index out of range");
    Shape os{1, s.c, s.h, s.w};
    Tensor out(os);
    std::size_t sz = os.count();
    std::copy(ta.data() + std::size_t(index) * sz, ta.data() + std::size_t(index + 1) * sz,
              out.data());
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia, index, sz]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ia);
            double* d = dst.data() + std::size_t(index) * sz;
            for (std::size_t i = 0; i < sz; ++i) d[i] += gr[i];
        };
    }
    return v;
}

Var Graph::concat_n(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_n: empty list");
    const Shape& s0 = nodes_[parts[0].id].val.shape();
    int ntot = 0;
    bool ng = false;
    for (Var p : parts) {
        const Shape& s = nodes_[p.id].val.shape();
        if (s.c != s0.c || s.h != s0.h || s.w != s0.w)
            throw ShapeError("concat_n: incompatible " + s.str() + " vs " + s0.str());
        ntot += s.n;
        ng = ng || nodes_[p.id].needs_grad;
    }
    Shape os{ntot, s0.c, s0.h, s0.w};
    Tensor out(os);
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& tp = nodes_[p.id].val;
        std::copy(tp.data(), tp.data() + tp.size(), out.data() + off);
        off += tp.size();
    }
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id;
        std::vector<int> srcs;
        for (Var p : parts) srcs.push_back(p.id);
        nodes_[id].back = [g, id, srcs]() {
            const Tensor& gr = g->nodes_[id].grad;
            std::size_t off2 = 0;
            for (int sid : srcs) {
                std::size_t sz = g->nodes_[sid].val.size();
                if (g->nodes_[sid].needs_grad) {
                    Tensor& dst = g->grad_buf(sid);
                    const double* src = gr.data() + off2;
                    for (std::size_t i = 0; i < sz; ++i) dst[i] += src[i];
                }
                off2 += sz;
            }
        };
    }
    return v;
}

Var Graph::tile_spatial(Var a, int out_h, int out_w) {
    const Tensor& ta = nodes_[a.id].val;
    const Shape& s = ta.shape();
    Shape os{s.n, s.c, out_h, out_w};
    Tensor out(os);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x)
                    out.at(n, c, y, x) = ta.at(n, c, y % s.h, x % s.w);
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia, out_h, out_w]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ia);
            const Shape& s2 = dst.shape();
            for (int n = 0; n < s2.n; ++n)
                for (int c = 0; c < s2.c; ++c)
                    for (int y = 0; y < out_h; ++y)
                        for (int x = 0; x < out_w; ++x)
                            dst.at(n, c, y % s2.h, x % s2.w) += gr.at(n, c, y, x);
        };
    }
    return v;
}

Var Graph::pad_reflect(Var a, int pad_h, int pad_w) {
    const Tensor& ta = nodes_[a.id].val;
    const Shape& s = ta.shape();
    if (pad_h < 0 || pad_w < 0 || pad_h >= s.h || pad_w >= s.w)
        throw ShapeError("pad_reflect: pad must be in [0, size)");
    const int oh = s.h + pad_h, ow = s.w + pad_w;
    // mirror with the edge row/col repeated: index i maps to 2*size-1-i
    auto my = [&](int y) { return y < s.h ? y : 2 * s.h - 1 - y; };
    auto mx = [&](int x) { return x < s.w ? x : 2 * s.w - 1 - x; };
    Tensor out(Shape{s.n, s.c, oh, ow});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) out.at(n, c, y, x) = ta.at(n, c, my(y), mx(x));
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        int ih = s.h, iw = s.w;
        nodes_[id].back = [g, id, ia, ih, iw, oh, ow]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ia);
            const Shape& s2 = dst.shape();
            for (int n = 0; n < s2.n; ++n)
                for (int c = 0; c < s2.c; ++c)
                    for (int y = 0; y < oh; ++y) {
                        int sy = y < ih ? y : 2 * ih - 1 - y;
                        for (int x = 0; x < ow; ++x) {
                            int sx = x < iw ? x : 2 * iw - 1 - x;
                            dst.at(n, c, sy, sx) += gr.at(n, c, y, x);
                        }
                    }
        };
    }
    return v;
}

Var Graph::crop_tl(Var a, int out_h, int out_w) {
    const Tensor& ta = nodes_[a.id].val;
    const Shape& s = ta.shape();
    if (out_h < 1 || out_w < 1 || out_h > s.h || out_w > s.w)
        throw ShapeError("crop_tl: window must fit inside the input");
    Tensor out(Shape{s.n, s.c, out_h, out_w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x) out.at(n, c, y, x) = ta.at(n, c, y, x);
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia, out_h, out_w]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ia);
            for (int n = 0; n < gr.shape().n; ++n)
                for (int c = 0; c < gr.shape().c; ++c)
                    for (int y = 0; y < out_h; ++y)
                        for (int x = 0; x < out_w; ++x)
                            dst.at(n, c, y, x) += gr.at(n, c, y, x);
        };
    }
    return v;
}

// ---- Convolution ----

namespace {

void im2col(const Tensor& x, int n, int kh, int kw, int stride, int pad, int oh, int ow,
            AlignedVec& cols) {
    const Shape& s = x.shape();
    const int cin = s.c, ih = s.h, iw = s.w;
    cols.assign(std::size_t(cin) * kh * kw * oh * ow, 0.0);
    const std::size_t ncols = std::size_t(oh) * ow;
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                double* row = cols.data() + (std::size_t(ci) * kh * kw + ky * kw + kx) * ncols;
                for (int oy = 0; oy < oh; ++oy) {
                    int sy = oy * stride - pad + ky;
                    if (sy < 0 || sy >= ih) continue;
                    const double* src = x.data() + ((std::size_t(n) * cin + ci) * ih + sy) * iw;
                    double* drow = row + std::size_t(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int sx = ox * stride - pad + kx;
                        if (sx >= 0 && sx < iw) drow[ox] = src[sx];
                    }
                }
            }
        }
    }
}

void col2im_add(const AlignedVec& cols, int n, int kh, int kw, int stride, int pad,
                int oh, int ow, Tensor& dx) {
    const Shape& s = dx.shape();
    const int cin = s.c, ih = s.h, iw = s.w;
    const std::size_t ncols = std::size_t(oh) * ow;
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const double* row = cols.data() + (std::size_t(ci) * kh * kw + ky * kw + kx) * ncols;
                for (int oy = 0; oy < oh; ++oy) {
                    int sy = oy * stride - pad + ky;
                    if (sy < 0 || sy >= ih) continue;
                    double* dst = &dx.at(n, ci, sy, 0);
                    const double* drow = row + std::size_t(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int sx = ox * stride - pad + kx;
                        if (sx >= 0 && sx < iw) dst[sx] += drow[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var Graph::conv2d(Var x, Var w, Var b, int stride, int pad) {
    const Tensor& tx = nodes_[x.id].val;
    const Tensor& tw = nodes_[w.id].val;
    const Tensor& tb = nodes_[b.id].val;
    const Shape& sx = tx.shape();
    const Shape& sw = tw.shape();  // (cout, cin, kh, kw)
    if (sw.c != sx.c)
        throw ShapeError("conv2d: weight expects " + std::to_string(sw.c) + " input channels, got " +
                         std::to_string(sx.c));
    if (tb.shape().c != sw.n || tb.size() != std::size_t(sw.n))
        throw ShapeError("conv2d: bias shape mismatch");
    const int cout = sw.n, cin = sw.c, kh = sw.h, kw = sw.w;
    const int oh = (sx.h + 2 * pad - kh) / stride + 1;
    const int ow = (sx.w + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: output would be empty");

    Shape os{sx.n, cout, oh, ow};
    Tensor out(os);
    const std::size_t ncols = std::size_t(oh) * ow;
    const std::size_t krows = std::size_t(cin) * kh * kw;
    AlignedVec cols;
    for (int n = 0; n < sx.n; ++n) {
        im2col(tx, n, kh, kw, stride, pad, oh, ow, cols);
        CMapRM wm(tw.data(), cout, krows);
        CMapRM cm(cols.data(), krows, ncols);
        MapRM om(out.data() + std::size_t(n) * cout * ncols, cout, ncols);
        om.noalias() = wm * cm;
        for (int co = 0; co < cout; ++co) om.row(co).array() += tb[co];
    }

    bool ng = nodes_[x.id].needs_grad || nodes_[w.id].needs_grad || nodes_[b.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ix = x.id, iw_ = w.id, ib = b.id;
        nodes_[id].back = [g, id, ix, iw_, ib, stride, pad, cout, cin, kh, kw, oh, ow]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& tx2 = g->nodes_[ix].val;
            const Tensor& tw2 = g->nodes_[iw_].val;
            const Shape& sx2 = tx2.shape();
            const std::size_t ncols2 = std::size_t(oh) * ow;
            const std::size_t krows2 = std::size_t(cin) * kh * kw;
            AlignedVec cols2;
            AlignedVec dcols(krows2 * ncols2);
            const bool need_w = g->nodes_[iw_].needs_grad;
            const bool need_x = g->nodes_[ix].needs_grad;
            const bool need_b = g->nodes_[ib].needs_grad;
            for (int n = 0; n < sx2.n; ++n) {
                CMapRM gm(gr.data() + std::size_t(n) * cout * ncols2, cout, ncols2);
                if (need_w) {
                    im2col(tx2, n, kh, kw, stride, pad, oh, ow, cols2);
                    CMapRM cm(cols2.data(), krows2, ncols2);
                    MapRM dwm(g->grad_buf(iw_).data(), cout, krows2);
                    dwm.noalias() += gm * cm.transpose();
                }
                if (need_b) {
                    Tensor& db = g->grad_buf(ib);
                    for (int co = 0; co < cout; ++co) db[co] += gm.row(co).sum();
                }
                if (need_x) {
                    CMapRM wm(tw2.data(), cout, krows2);
                    MapRM dcm(dcols.data(), krows2, ncols2);
                    dcm.noalias() = wm.transpose() * gm;
                    col2im_add(dcols, n, kh, kw, stride, pad, oh, ow, g->grad_buf(ix));
                }
            }
        };
    }
    return v;
}

Var Graph::dense(Var x, Var w, Var b) {
    const Tensor& tx = nodes_[x.id].val;
    const Tensor& tw = nodes_[w.id].val;  // (out, in, 1, 1)
    const Tensor& tb = nodes_[b.id].val;
    const Shape& sx = tx.shape();
    const std::size_t fin = std::size_t(sx.c) * sx.h * sx.w;
    if (std::size_t(tw.shape().c) != fin)
        throw ShapeError("dense: weight expects " + std::to_string(tw.shape().c) +
                         " inputs, got " + std::to_string(fin));
    const int fout = tw.shape().n;
    if (tb.size() != std::size_t(fout)) throw ShapeError("dense: bias shape mismatch");

    Shape os{sx.n, fout, 1, 1};
    Tensor out(os);
    CMapRM xm(tx.data(), sx.n, fin);
    CMapRM wm(tw.data(), fout, fin);
    MapRM om(out.data(), sx.n, fout);
    om.noalias() = xm * wm.transpose();
    for (int n = 0; n < sx.n; ++n)
        for (int f = 0; f < fout; ++f) om(n, f) += tb[f];

    bool ng = nodes_[x.id].needs_grad || nodes_[w.id].needs_grad || nodes_[b.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ix = x.id, iw_ = w.id, ib = b.id;
        nodes_[id].back = [g, id, ix, iw_, ib, fin, fout]() {
            const Tensor& gr = g->nodes_[id].grad;
            const Tensor& tx2 = g->nodes_[ix].val;
            const Tensor& tw2 = g->nodes_[iw_].val;
            const int n = tx2.shape().n;
            CMapRM gm(gr.data(), n, fout);
            CMapRM xm(tx2.data(), n, fin);
            CMapRM wm(tw2.data(), fout, fin);
            if (g->nodes_[iw_].needs_grad) {
                MapRM dwm(g->grad_buf(iw_).data(), fout, fin);
                dwm.noalias() += gm.transpose() * xm;
            }
            if (g->nodes_[ib].needs_grad) {
                Tensor& db = g->grad_buf(ib);
                for (int f = 0; f < fout; ++f) db[f] += gm.col(f).sum();
            }
            if (g->nodes_[ix].needs_grad) {
                MapRM dxm(g->grad_buf(ix).data(), n, fin);
                dxm.noalias() += gm * wm;
            }
        };
    }
    return v;
}

// ---- Resampling ----

namespace {

struct Tap {
    int i0, i1;
    double w0, w1;
};

// Half-pixel-center bilinear taps with edge clamping; bilinear of a constant
// image is the same constant for any scale.
std::vector<Tap> bilinear_taps(int in_size, int out_size) {
    std::vector<Tap> taps(out_size);
    const double scale = double(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        double f = std::floor(src);
        int i0 = int(f);
        double t = src - f;
        int i1 = i0 + 1;
        i0 = std::clamp(i0, 0, in_size - 1);
        i1 = std::clamp(i1, 0, in_size - 1);
        taps[o] = Tap{i0, i1, 1.0 - t, t};
    }
    return taps;
}

}  // namespace

Var Graph::resize_bilinear(Var x, int out_h, int out_w) {
    const Tensor& tx = nodes_[x.id].val;
    const Shape& s = tx.shape();
    auto ty = bilinear_taps(s.h, out_h);
    auto txp = bilinear_taps(s.w, out_w);
    Shape os{s.n, s.c, out_h, out_w};
    Tensor out(os);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < out_h; ++y) {
                const Tap& tyv = ty[y];
                for (int xx = 0; xx < out_w; ++xx) {
                    const Tap& txv = txp[xx];
                    out.at(n, c, y, xx) =
                        tyv.w0 * (txv.w0 * tx.at(n, c, tyv.i0, txv.i0) +
                                  txv.w1 * tx.at(n, c, tyv.i0, txv.i1)) +
                        tyv.w1 * (txv.w0 * tx.at(n, c, tyv.i1, txv.i0) +
                                  txv.w1 * tx.at(n, c, tyv.i1, txv.i1));
                }
            }
    bool ng = nodes_[x.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ix = x.id;
        nodes_[id].back = [g, id, ix, ty, txp, out_h, out_w]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor& dst = g->grad_buf(ix);
            const Shape& s2 = dst.shape();
            for (int n = 0; n < s2.n; ++n)
                for (int c = 0; c < s2.c; ++c)
                    for (int y = 0; y < out_h; ++y) {
                        const Tap& tyv = ty[y];
                        for (int xx = 0; xx < out_w; ++xx) {
                            const Tap& txv = txp[xx];
                            double gv = gr.at(n, c, y, xx);
                            dst.at(n, c, tyv.i0, txv.i0) += gv * tyv.w0 * txv.w0;
                            dst.at(n, c, tyv.i0, txv.i1) += gv * tyv.w0 * txv.w1;
                            dst.at(n, c, tyv.i1, txv.i0) += gv * tyv.w1 * txv.w0;
                            dst.at(n, c, tyv.i1, txv.i1) += gv * tyv.w1 * txv.w1;
                        }
                    }
        };
    }
    return v;
}

namespace {

std::vector<double> gauss_kernel(double sigma) {
    int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable pass along one axis with replicate padding.
void blur_axis(const Tensor& in, Tensor& out, const std::vector<double>& k, bool vertical) {
    const Shape& s = in.shape();
    const int radius = int(k.size() / 2);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (int t = -radius; t <= radius; ++t) {
                        int yy = y, xx = x;
                        if (vertical)
                            yy = std::clamp(y + t, 0, s.h - 1);
                        else
                            xx = std::clamp(x + t, 0, s.w - 1);
                        acc += k[t + radius] * in.at(n, c, yy, xx);
                    }
                    out.at(n, c, y, x) = acc;
                }
}

void blur_axis_adjoint(const Tensor& gout, Tensor& gin, const std::vector<double>& k,
                       bool vertical) {
    const Shape& s = gout.shape();
    const int radius = int(k.size() / 2);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double gv = gout.at(n, c, y, x);
                    for (int t = -radius; t <= radius; ++t) {
                        int yy = y, xx = x;
                        if (vertical)
                            yy = std::clamp(y + t, 0, s.h - 1);
                        else
                            xx = std::clamp(x + t, 0, s.w - 1);
                        gin.at(n, c, yy, xx) += k[t + radius] * gv;
                    }
                }
}

}  // namespace

Var Graph::gauss_blur(Var x, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("gauss_blur: sigma must be positive");
    const Tensor& tx = nodes_[x.id].val;
    auto k = gauss_kernel(sigma);
    Tensor tmp(tx.shape());
    Tensor out(tx.shape());
    blur_axis(tx, tmp, k, false);
    blur_axis(tmp, out, k, true);
    bool ng = nodes_[x.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ix = x.id;
        nodes_[id].back = [g, id, ix, k]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor gtmp(gr.shape());
            blur_axis_adjoint(gr, gtmp, k, true);
            Tensor& dst = g->grad_buf(ix);
            blur_axis_adjoint(gtmp, dst, k, false);
        };
    }
    return v;
}

// ---- Blockwise DCT ----

namespace {

const Eigen::Matrix<double, 8, 8>& dct_matrix() {
    static const Eigen::Matrix<double, 8, 8> D = [] {
        Eigen::Matrix<double, 8, 8> m;
        const double pi = 3.14159265358979323846;
        for (int k = 0; k < 8; ++k) {
            double ck = (k == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int n = 0; n < 8; ++n) m(k, n) = ck * std::cos(pi * (2 * n + 1) * k / 16.0);
        }
        return m;
    }();
    return D;
}

void dct_apply(const Tensor& in, Tensor& out, bool inverse) {
    const Shape& s = in.shape();
    const auto& D = dct_matrix();
    Eigen::Matrix<double, 8, 8> blk;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int by = 0; by < s.h; by += 8)
                for (int bx = 0; bx < s.w; bx += 8) {
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x) blk(y, x) = in.at(n, c, by + y, bx + x);
                    Eigen::Matrix<double, 8, 8> r;
                    if (inverse)
                        r = D.transpose() * blk * D;
                    else
                        r = D * blk * D.transpose();
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x) out.at(n, c, by + y, bx + x) = r(y, x);
                }
}

}  // namespace

Var Graph::dct8(Var x, bool inverse) {
    const Tensor& tx = nodes_[x.id].val;
    const Shape& s = tx.shape();
    if (s.h % 8 != 0 || s.w % 8 != 0)
        throw ShapeError("dct8: spatial size must be a multiple of 8, got " + s.str());
    Tensor out(s);
    dct_apply(tx, out, inverse);
    bool ng = nodes_[x.id].needs_grad;
    Var v = make(std::move(out), ng);
    if (ng) {
        // The transform is orthonormal, so the adjoint is the inverse.
        Graph* g = this;
        int id = v.id, ix = x.id;
        nodes_[id].back = [g, id, ix, inverse]() {
            const Tensor& gr = g->nodes_[id].grad;
            Tensor gi(gr.shape());
            dct_apply(gr, gi, !inverse);
            g->accumulate(ix, gi);
        };
    }
    return v;
}

// ---- Reductions ----

Var Graph::sum_all(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(Tensor(Shape{1, 1, 1, 1}, {s}), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia]() {
            double gv = g->nodes_[id].grad[0];
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gv;
        };
    }
    return v;
}

Var Graph::mean_all(Var a) {
    const Tensor& ta = nodes_[a.id].val;
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
    double inv = 1.0 / double(ta.size());
    bool ng = nodes_[a.id].needs_grad;
    Var v = make(Tensor(Shape{1, 1, 1, 1}, {s * inv}), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ia = a.id;
        nodes_[id].back = [g, id, ia, inv]() {
            double gv = g->nodes_[id].grad[0] * inv;
            Tensor& dst = g->grad_buf(ia);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gv;
        };
    }
    return v;
}

Var Graph::bce_mean(Var pred, const Tensor& target, double eps) {
    const Tensor& tp = nodes_[pred.id].val;
    require_same_shape(tp, target, "bce_mean");
    double s = 0.0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        double p = std::clamp(tp[i], eps, 1.0 - eps);
        double t = target[i];
        s += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    }
    double inv = 1.0 / double(tp.size());
    bool ng = nodes_[pred.id].needs_grad;
    Var v = make(Tensor(Shape{1, 1, 1, 1}, {s * inv}), ng);
    if (ng) {
        Graph* g = this;
        int id = v.id, ip = pred.id;
        Tensor tgt = target;
        nodes_[id].back = [g, id, ip, tgt, eps, inv]() {
            double gv = g->nodes_[id].grad[0] * inv;
            const Tensor& tp2 = g->nodes_[ip].val;
            Tensor& dst = g->grad_buf(ip);
            for (std::size_t i = 0; i < dst.size(); ++i) {
                double p = tp2[i];
                if (p <= eps || p >= 1.0 - eps) continue;  // clamp region: zero slope
                dst[i] += gv * (-tgt[i] / p + (1.0 - tgt[i]) / (1.0 - p));
            }
        };
    }
    return v;
}

}  // namespace tagkit
