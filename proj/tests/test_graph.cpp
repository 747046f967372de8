#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "tagkit/graph.hpp"
#include "tagkit/rng.hpp"
#include "tagkit/tensor.hpp"

using namespace tagkit;

namespace {

Tensor rand_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Mildly smooth values away from activation kinks and clamp boundaries.
Tensor interior_tensor(Shape s, Rng& rng) {
    Tensor t(s);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = rng.uniform(0.1, 0.9);
        t[i] = v;
    }
    return t;
}

}  // namespace

TEST_CASE("elementwise forward values") {
    Graph g;
    Var a = g.constant(Tensor(Shape{1, 1, 1, 3}, {-1.0, 0.5, 2.0}));
    CHECK(g.val(g.elu(a))[0] == doctest::Approx(std::expm1(-1.0)));
    CHECK(g.val(g.elu(a))[1] == doctest::Approx(0.5));
    CHECK(g.val(g.sigmoid(a))[1] == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));
    CHECK(g.val(g.clamp01(a))[0] == 0.0);
    CHECK(g.val(g.clamp01(a))[2] == 1.0);
    CHECK(g.val(g.round_st(a))[1] == doctest::Approx(1.0));  // round-half-away
    CHECK(g.val(g.square(a))[2] == doctest::Approx(4.0));
}

TEST_CASE("gradients: add/sub/mul/scalar ops") {
    Rng rng(11);
    Shape s{2, 2, 3, 3};
    auto f = [](Graph& g, const std::vector<Var>& xs) {
        Var y = g.mul(g.add(xs[0], xs[1]), g.sub(xs[0], g.mul_scalar(xs[1], 0.7)));
        y = g.add_scalar(y, 0.3);
        return g.mean_all(g.square(y));
    };
    auto rep = fd::check(f, {rand_tensor(s, rng), rand_tensor(s, rng)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients: activations") {
    Rng rng(12);
    Shape s{1, 2, 4, 4};
    auto f = [](Graph& g, const std::vector<Var>& xs) {
        Var y = g.elu(xs[0]);
        y = g.tanh(y);
        y = g.sigmoid(y);
        return g.sum_all(y);
    };
    auto rep = fd::check(f, {rand_tensor(s, rng)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients: clamp01 passes only inside [0,1]") {
    // interior region
    Rng rng(13);
    auto f = [](Graph& g, const std::vector<Var>& xs) {
        return g.mean_all(g.square(g.clamp01(xs[0])));
    };
    auto rep = fd::check(f, {interior_tensor(Shape{1, 1, 4, 4}, rng)});
    CHECK(rep.max_rel_err < 1e-3);

    // saturated region: analytic gradient must be exactly zero
    Graph g;
    Var x = g.variable(Tensor(Shape{1, 1, 1, 2}, {-0.5, 1.5}));
    g.backward(g.sum_all(g.clamp01(x)));
    CHECK(g.grad(x)[0] == 0.0);
    CHECK(g.grad(x)[1] == 0.0);
}

TEST_CASE("round_st backward is identity") {
    Graph g;
    Var x = g.variable(Tensor(Shape{1, 1, 1, 3}, {0.2, 1.7, -0.6}));
    g.backward(g.sum_all(g.mul_scalar(g.round_st(x), 2.0)));
    for (int i = 0; i < 3; ++i) CHECK(g.grad(x)[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d forward matches naive loops") {
    Rng rng(21);
    Tensor x = rand_tensor(Shape{2, 3, 5, 6}, rng);
    Tensor w = rand_tensor(Shape{4, 3, 3, 3}, rng);
    Tensor b = rand_tensor(Shape{1, 4, 1, 1}, rng);
    int stride = 2, pad = 1;
    Graph g;
    Var out = g.conv2d(g.constant(x), g.constant(w), g.constant(b), stride, pad);
    const Tensor& o = g.val(out);
    int oh = (5 + 2 * pad - 3) / stride + 1, ow = (6 + 2 * pad - 3) / stride + 1;
    CHECK(o.shape() == Shape{2, 4, oh, ow});
    for (int n = 0; n < 2; ++n)
        for (int co = 0; co < 4; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b[co];
                    for (int ci = 0; ci < 3; ++ci)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                int sy = oy * stride - pad + ky;
                                int sx = ox * stride - pad + kx;
                                if (sy < 0 || sy >= 5 || sx < 0 || sx >= 6) continue;
                                acc += x.at(n, ci, sy, sx) * w.at(co, ci, ky, kx);
                            }
                    CHECK(o.at(n, co, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
                }
}

TEST_CASE("gradients: conv2d w.r.t. input, weight, bias") {
    Rng rng(22);
    for (int stride : {1, 2}) {
        auto f = [stride](Graph& g, const std::vector<Var>& xs) {
            Var y = g.conv2d(xs[0], xs[1], xs[2], stride, 1);
            return g.mean_all(g.square(y));
        };
        auto rep = fd::check(f,
                             {rand_tensor(Shape{2, 2, 5, 5}, rng),
                              rand_tensor(Shape{3, 2, 3, 3}, rng),
                              rand_tensor(Shape{1, 3, 1, 1}, rng)});
        CHECK(rep.max_rel_err < 1e-3);
    }
}

TEST_CASE("gradients: dense") {
    Rng rng(23);
    auto f = [](Graph& g, const std::vector<Var>& xs) {
        Var y = g.dense(xs[0], xs[1], xs[2]);
        return g.mean_all(g.square(y));
    };
    auto rep = fd::check(f,
                         {rand_tensor(Shape{3, 2, 2, 2}, rng),
                          rand_tensor(Shape{5, 8, 1, 1}, rng),
                          rand_tensor(Shape{1, 5, 1, 1}, rng)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("resize_bilinear preserves constants and is exact on identity") {
    Graph g;
    Tensor flat = Tensor::full(Shape{1, 2, 7, 5}, 0.37);
    CHECK(g.val(g.resize_bilinear(g.constant(flat), 13, 4))[7] == doctest::Approx(0.37));

    Rng rng(31);
    Tensor x = rand_tensor(Shape{1, 1, 6, 6}, rng);
    const Tensor& same = g.val(g.resize_bilinear(g.constant(x), 6, 6));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == doctest::Approx(x[i]));
}

TEST_CASE("gradients: resize_bilinear up and down") {
    Rng rng(32);
    for (auto [oh, ow] : {std::pair{8, 8}, std::pair{3, 3}}) {
        auto f = [oh = oh, ow = ow](Graph& g, const std::vector<Var>& xs) {
            return g.mean_all(g.square(g.resize_bilinear(xs[0], oh, ow)));
        };
        auto rep = fd::check(f, {rand_tensor(Shape{1, 2, 5, 5}, rng)});
        CHECK(rep.max_rel_err < 1e-3);
    }
}

TEST_CASE("gauss_blur preserves constants (kernel sums to 1)") {
    Graph g;
    Tensor flat = Tensor::full(Shape{1, 1, 9, 9}, 0.61);
    const Tensor& out = g.val(g.gauss_blur(g.constant(flat), 1.7));
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.61));
}

TEST_CASE("gradients: gauss_blur") {
    Rng rng(33);
    auto f = [](Graph& g, const std::vector<Var>& xs) {
        return g.mean_all(g.square(g.gauss_blur(xs[0], 1.2)));
    };
    auto rep = fd::check(f, {rand_tensor(Shape{1, 2, 6, 6}, rng)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("dct8 is orthonormal: inverse restores input, energy preserved") {
    Rng rng(41);
    Tensor x = rand_tensor(Shape{1, 3, 8, 16}, rng);
    Graph g;
    Var fwd = g.dct8(g.constant(x), false);
    Var back = g.dct8(fwd, true);
    const Tensor& r = g.val(back);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == doctest::Approx(x[i]).epsilon(1e-10));

    double ein = 0, eout = 0;
    const Tensor& c = g.val(fwd);
    for (std::size_t i = 0; i < x.size(); ++i) {
        ein += x[i] * x[i];
        eout += c[i] * c[i];
    }
    CHECK(eout == doctest::Approx(ein).epsilon(1e-10));
}

TEST_CASE("dct8 DC coefficient is block mean times 8") {
    Graph g;
    Tensor flat = Tensor::full(Shape{1, 1, 8, 8}, 0.5);
    const Tensor& c = g.val(g.dct8(g.constant(flat), false));
    CHECK(c.at(0, 0, 0, 0) == doctest::Approx(0.5 * 8.0));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            if (y || x) CHECK(c.at(0, 0, y, x) == doctest::Approx(0.0));
}

TEST_CASE("gradients: dct8 forward and inverse") {
    Rng rng(42);
    for (bool inv : {false, true}) {
        auto f = [inv](Graph& g, const std::vector<Var>& xs) {
            return g.mean_all(g.square(g.dct8(xs[0], inv)));
        };
        auto rep = fd::check(f, {rand_tensor(Shape{1, 1, 8, 8}, rng)}, 1e-5, 3);
        CHECK(rep.max_rel_err < 1e-3);
    }
}

TEST_CASE("gradients: structure ops") {
    Rng rng(51);
    auto f = [](Graph& g, const std::vector<Var>& xs) {
        Var c = g.concat_c({xs[0], xs[1]});
        Var t = g.tile_spatial(xs[2], 4, 4);
        Var all = g.concat_c({c, t});
        Var s0 = g.slice_n(all, 0);
        Var s1 = g.slice_n(all, 1);
        Var back = g.concat_n({s0, s1});
        Var r = g.reshape(back, Shape{2, 5, 4, 4});
        return g.mean_all(g.square(r));
    };
    auto rep = fd::check(f,
                         {rand_tensor(Shape{2, 2, 4, 4}, rng), rand_tensor(Shape{2, 2, 4, 4}, rng),
                          rand_tensor(Shape{2, 1, 2, 2}, rng)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients: mul_const broadcasting over batch") {
    Rng rng(52);
    Tensor mask = rand_tensor(Shape{1, 1, 4, 4}, rng, 0.0, 1.0);
    Tensor mask3 = Tensor(Shape{1, 3, 4, 4});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) mask3[c * 16 + i] = mask[i];
    auto f = [mask3](Graph& g, const std::vector<Var>& xs) {
        return g.mean_all(g.square(g.mul_const(xs[0], mask3)));
    };
    auto rep = fd::check(f, {rand_tensor(Shape{2, 3, 4, 4}, rng)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients: bce_mean") {
    Rng rng(53);
    Tensor target(Shape{1, 8, 1, 1});
    for (int i = 0; i < 8; ++i) target[i] = rng.bit() ? 1.0 : 0.0;
    auto f = [target](Graph& g, const std::vector<Var>& xs) {
        return g.bce_mean(g.sigmoid(xs[0]), target, 1e-7);
    };
    auto rep = fd::check(f, {rand_tensor(Shape{1, 8, 1, 1}, rng, -2.0, 2.0)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("bce_mean value matches hand computation") {
    Graph g;
    Var p = g.constant(Tensor(Shape{1, 1, 1, 2}, {0.9, 0.2}));
    Tensor t(Shape{1, 1, 1, 2}, {1.0, 0.0});
    double expect = (-std::log(0.9) - std::log(0.8)) / 2.0;
    CHECK(g.val(g.bce_mean(p, t, 1e-7))[0] == doctest::Approx(expect));
}

TEST_CASE("param gradients accumulate into ParamSet and Adam buffers exist") {
    ParamSet ps;
    Rng rng(61);
    ps.create("w", rand_tensor(Shape{2, 2, 1, 1}, rng));
    Param& w = ps.get("w");
    Graph g;
    Var wv = g.param(w);
    g.backward(g.sum_all(g.square(wv)));
    for (std::size_t i = 0; i < w.value.size(); ++i)
        CHECK(w.grad[i] == doctest::Approx(2.0 * w.value[i]));
    ps.zero_grads();
    CHECK(w.grad[0] == 0.0);
    CHECK(ps.total_count() == 4);
}

TEST_CASE("frozen params receive no gradient") {
    ParamSet ps;
    ps.create("f", Tensor::full(Shape{1, 1, 1, 1}, 2.0));
    Graph g;
    Var fv = g.frozen(ps.get("f"));
    Var x = g.variable(Tensor::full(Shape{1, 1, 1, 1}, 3.0));
    g.backward(g.sum_all(g.mul(fv, x)));
    CHECK(g.grad(x)[0] == doctest::Approx(2.0));
    CHECK(ps.get("f").grad[0] == 0.0);
}

TEST_CASE("shape errors are thrown, not silently broadcast") {
    Graph g;
    Var a = g.constant(Tensor::zeros(Shape{1, 1, 2, 2}));
    Var b = g.constant(Tensor::zeros(Shape{1, 1, 2, 3}));
    CHECK_THROWS_AS(g.add(a, b), ShapeError);
    CHECK_THROWS_AS(g.dct8(g.constant(Tensor::zeros(Shape{1, 1, 12, 8})), false), ShapeError);
    CHECK_THROWS_AS(g.backward(a), ShapeError);  // non-scalar
}

TEST_CASE("pad_reflect mirrors bottom/right and crops back exactly") {
    Graph g;
    Tensor x(Shape{1, 1, 3, 2}, {1, 2, 3, 4, 5, 6});
    Var p = g.pad_reflect(g.constant(x), 2, 1);
    const Tensor& tp = g.val(p);
    CHECK(tp.shape().h == 5);
    CHECK(tp.shape().w == 3);
    CHECK(tp.at(0, 0, 0, 2) == 2.0);  // column 2 mirrors column 1
    CHECK(tp.at(0, 0, 3, 0) == 5.0);  // row 3 mirrors row 2
    CHECK(tp.at(0, 0, 4, 0) == 3.0);  // row 4 mirrors row 1
    Var back = g.crop_tl(p, 3, 2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(g.val(back)[i] == x[i]);
    CHECK_THROWS_AS(g.pad_reflect(g.constant(x), 3, 0), ShapeError);
    CHECK_THROWS_AS(g.crop_tl(g.constant(x), 4, 2), ShapeError);
}

TEST_CASE("gradients: pad_reflect and crop_tl") {
    Rng rng(77);
    auto f = [](Graph& g, const std::vector<Var>& xs) {
        Var p = g.pad_reflect(xs[0], 3, 2);
        return g.mean_all(g.square(g.crop_tl(p, 4, 4)));
    };
    auto rep = fd::check(f, {rand_tensor(Shape{1, 2, 5, 5}, rng)});
    CHECK(rep.max_rel_err < 1e-4);
}
