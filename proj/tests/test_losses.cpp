#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "tagkit/data_pipeline.hpp"
#include "tagkit/errors.hpp"
#include "tagkit/losses.hpp"
#include "tagkit/model.hpp"
#include "tagkit/rng.hpp"

using namespace tagkit;

namespace {

Tensor rand_img_batch(int n, int size, Rng& rng, double lo = 0.1, double hi = 0.9) {
    Tensor t(Shape{n, 3, size, size});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("schedule: warm-up zeros, midpoint, saturation, monotone") {
    ScheduleConfig sc;
    sc.warmup_steps = 100;
    sc.ramp_steps = 50;
    auto w0 = schedule_weights(0, sc);
    CHECK(w0.residual == 0.0);
    CHECK(w0.perceptual == 0.0);
    CHECK(w0.critic == 0.0);
    CHECK(w0.message == sc.lambda_m);
    auto w99 = schedule_weights(99, sc);
    CHECK(w99.residual == 0.0);

    auto mid = schedule_weights(125, sc);
    CHECK(mid.residual == doctest::Approx(sc.lambda_r_max / 2));
    CHECK(mid.perceptual == doctest::Approx(sc.lambda_p_max / 2));
    CHECK(mid.critic == doctest::Approx(sc.lambda_c_max / 2));

    auto sat = schedule_weights(150, sc);
    CHECK(sat.residual == doctest::Approx(sc.lambda_r_max));
    CHECK(schedule_weights(5000, sc).residual == doctest::Approx(sc.lambda_r_max));

    double prev_r = -1;
    for (int s = 0; s < 200; s += 7) {
        auto w = schedule_weights(s, sc);
        CHECK(w.residual >= prev_r);
        CHECK(w.message == sc.lambda_m);
        prev_r = w.residual;
    }
}

TEST_CASE("total_loss arithmetic and linearity") {
    LossBreakdown b{0.1, 0.2, 0.3, 0.4, 0.0};
    LossWeights all1{1, 1, 1, 1};
    CHECK(total_loss(b, all1) == doctest::Approx(1.0));
    LossWeights zero{0, 0, 0, 0};
    CHECK(total_loss(b, zero) == 0.0);
    LossWeights warm{0, 0, 0, 0.7};
    CHECK(total_loss(b, warm) == doctest::Approx(0.7 * 0.4));

    // linear in each weight
    LossWeights w{0.5, 0.25, 2.0, 1.0};
    double base = total_loss(b, w);
    LossWeights w2 = w;
    w2.residual *= 3.0;
    CHECK(total_loss(b, w2) - base == doctest::Approx(2.0 * w.residual * b.residual));

    LossBreakdown bad = b;
    bad.message = std::nan("");
    CHECK_THROWS_AS(total_loss(bad, all1), NumericError);
}

TEST_CASE("residual loss closed forms") {
    Rng rng(1);
    Tensor img = rand_img_batch(1, 16, rng);
    Tensor mask = default_mask(16, MaskKind::Uniform);
    CHECK(residual_loss_value(img, img, mask) == 0.0);

    // uniform mask, constant difference d: (1-beta)*d^2
    Tensor shifted = img;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.05;
    CHECK(residual_loss_value(img, shifted, mask, 0.5) ==
          doctest::Approx((1.0 - 0.5) * 0.05 * 0.05));

    // zero mask: plain mean squared error
    Tensor zmask = Tensor::zeros(Shape{1, 1, 16, 16});
    Tensor other = rand_img_batch(1, 16, rng);
    double plain = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        double d = other[i] - img[i];
        plain += d * d;
    }
    plain /= double(img.size());
    CHECK(residual_loss_value(img, other, zmask) == doctest::Approx(plain));
}

TEST_CASE("perceptual distance: identity, symmetry, pinned shift value") {
    Tensor a = generate_synthetic_face(1, 16, FaceAttrs{});
    CHECK(perceptual_loss_value(a, a) == 0.0);

    Tensor b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::min(1.0, b[i] + 0.1);
    double ab = perceptual_loss_value(a, b);
    double ba = perceptual_loss_value(b, a);
    CHECK(ab == doctest::Approx(ba));
    CHECK(ab > 0.0);
    CHECK(ab == doctest::Approx(0.021245258506).epsilon(1e-6));
}

TEST_CASE("message loss closed forms and summation oracle") {
    Bits truth{1, 0, 1, 1};
    std::vector<double> perfect{1.0, 0.0, 1.0, 1.0};
    CHECK(message_loss_value(perfect, truth) <= -std::log(1.0 - 1e-7) + 1e-12);
    CHECK(message_loss_value(perfect, truth) >= 0.0);

    std::vector<double> half{0.5, 0.5, 0.5, 0.5};
    CHECK(message_loss_value(half, truth) == doctest::Approx(std::log(2.0)));

    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        int n = 8;
        std::vector<double> soft(n);
        Bits t(n);
        for (int i = 0; i < n; ++i) {
            soft[i] = rng.uniform(0.01, 0.99);
            t[i] = std::uint8_t(rng.bit());
        }
        double oracle = 0;
        for (int i = 0; i < n; ++i)
            oracle += t[i] ? -std::log(soft[i]) : -std::log(1.0 - soft[i]);
        oracle /= n;
        CHECK(std::fabs(message_loss_value(soft, t) - oracle) < 1e-10);
    }
}

TEST_CASE("critic: identical batches give chance accuracy") {
    Critic critic(16, 5);
    Rng rng(6);
    Tensor batch = rand_img_batch(4, 16, rng);
    double acc = critic.step(batch, batch, AdamConfig{});
    CHECK(acc == doctest::Approx(0.5).epsilon(0.2));
    CHECK(std::fabs(acc - 0.5) <= 0.1);
}

TEST_CASE("critic separates black from white within 50 steps") {
    Critic critic(16, 7);
    Tensor black = Tensor::full(Shape{4, 3, 16, 16}, 0.05);
    Tensor white = Tensor::full(Shape{4, 3, 16, 16}, 0.95);
    AdamConfig opt;
    opt.lr = 1e-3;
    double acc = 0;
    for (int s = 0; s < 50; ++s) acc = critic.step(black, white, opt);
    CHECK(acc >= 0.95);
}

TEST_CASE("adversarial loss: zeroed head gives ln 2; trained critic ranks real lower") {
    Critic critic(16, 8);
    critic.params().get("critic.fc.w").value.fill(0.0);
    critic.params().get("critic.fc.b").value.fill(0.0);
    Rng rng(9);
    Tensor batch = rand_img_batch(3, 16, rng);
    Graph g;
    double lc = g.val(critic.adversarial_loss(g, g.constant(batch)))[0];
    CHECK(lc == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(lc >= 0.0);

    // once the critic can tell the classes apart, encoded-identical-to-real
    // images sit at a lower adversarial loss than true encoded ones
    Critic c2(16, 10);
    Tensor real = Tensor::full(Shape{4, 3, 16, 16}, 0.1);
    Tensor encoded = Tensor::full(Shape{4, 3, 16, 16}, 0.9);
    AdamConfig opt;
    opt.lr = 1e-3;
    for (int s = 0; s < 50; ++s) c2.step(real, encoded, opt);
    Graph g2;
    double on_real = g2.val(c2.adversarial_loss(g2, g2.constant(real)))[0];
    Graph g3;
    double on_encoded = g3.val(c2.adversarial_loss(g3, g3.constant(encoded)))[0];
    CHECK(on_real < on_encoded);
}

TEST_CASE("gradients: residual loss") {
    Rng rng(11);
    Tensor mask = default_mask(8, MaskKind::BorderWeighted);
    Tensor img = rand_img_batch(1, 8, rng);
    auto f = [&](Graph& g, const std::vector<Var>& xs) {
        return residual_loss(g, g.constant(img), xs[0], mask);
    };
    auto rep = fd::check(f, {rand_img_batch(1, 8, rng)});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients: perceptual distance") {
    Rng rng(12);
    RandomFeatureMetric metric(1234);
    Tensor ref = rand_img_batch(1, 16, rng);
    auto f = [&](Graph& g, const std::vector<Var>& xs) {
        return metric.distance(g, xs[0], g.constant(ref));
    };
    auto rep = fd::check(f, {rand_img_batch(1, 16, rng)}, 1e-5, 7);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients: message loss through a sigmoid") {
    Rng rng(13);
    Tensor truth(Shape{1, 6, 1, 1});
    for (int i = 0; i < 6; ++i) truth[i] = double(rng.bit());
    Tensor logits(Shape{1, 6, 1, 1});
    for (int i = 0; i < 6; ++i) logits[i] = rng.uniform(-2.0, 2.0);
    auto f = [&](Graph& g, const std::vector<Var>& xs) {
        return message_loss(g, g.sigmoid(xs[0]), truth);
    };
    auto rep = fd::check(f, {logits});
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients: adversarial loss w.r.t. encoded images") {
    Critic critic(16, 21);
    Rng rng(14);
    auto f = [&](Graph& g, const std::vector<Var>& xs) {
        return critic.adversarial_loss(g, xs[0]);
    };
    auto rep = fd::check(f, {rand_img_batch(1, 16, rng)}, 1e-5, 11);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("schedule config validation") {
    ScheduleConfig sc;
    sc.ramp_steps = 0;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
    sc = ScheduleConfig{};
    sc.lambda_r_max = -1;
    CHECK_THROWS_AS(sc.validate(), ConfigError);
}
