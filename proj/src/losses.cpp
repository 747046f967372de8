#include "tagkit/losses.hpp"

#include <cmath>

#include "tagkit/errors.hpp"
#include "tagkit/rng.hpp"

namespace tagkit {

void ScheduleConfig::validate() const {
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (ramp_steps < 1) throw ConfigError("ramp_steps must be >= 1");
    if (lambda_r_max < 0 || lambda_p_max < 0 || lambda_c_max < 0 || lambda_m < 0)
        throw ConfigError("loss weights must be non-negative");
}

LossWeights schedule_weights(int step, const ScheduleConfig& sc) {
    sc.validate();
    if (step < 0) throw ConfigError("step must be >= 0");
    LossWeights w;
    w.message = sc.lambda_m;
    if (step < sc.warmup_steps) return w;  // λ_{R,P,C} stay 0
    double t = std::min(1.0, double(step - sc.warmup_steps) / double(sc.ramp_steps));
    w.residual = sc.lambda_r_max * t;
    w.perceptual = sc.lambda_p_max * t;
    w.critic = sc.lambda_c_max * t;
    return w;
}

double total_loss(const LossBreakdown& parts, const LossWeights& w) {
    double t = w.residual * parts.residual + w.perceptual * parts.perceptual +
               w.critic * parts.critic + w.message * parts.message;
    if (!std::isfinite(t)) throw NumericError("total loss is not finite");
    return t;
}

// ---- residual ----

namespace {

Tensor residual_weight(const Tensor& mask, double beta, int channels) {
    const Shape& ms = mask.shape();
    if (ms.n != 1 || ms.c != 1) throw ShapeError("mask must be (1,1,S,S), got " + ms.str());
    if (beta < 0.0 || beta > 1.0) throw ConfigError("mask weight beta must be in [0,1]");
    Tensor w(Shape{1, channels, ms.h, ms.w});
    std::size_t plane = std::size_t(ms.h) * ms.w;
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            double mv = mask[i];
            if (mv < 0.0 || mv > 1.0) throw RangeError("mask values must be in [0,1]");
            w[std::size_t(c) * plane + i] = 1.0 - beta * mv;
        }
    return w;
}

}  // namespace

Var residual_loss(Graph& g, Var image, Var encoded, const Tensor& mask, double beta) {
    const Shape& s = g.val(image).shape();
    require_same_shape(g.val(image), g.val(encoded), "residual_loss");
    Tensor w = residual_weight(mask, beta, s.c);
    if (w.shape().h != s.h || w.shape().w != s.w)
        throw ShapeError("mask size does not match images");
    Var d = g.sub(encoded, image);
    return g.mean_all(g.mul_const(g.square(d), w));
}

double residual_loss_value(const Tensor& image, const Tensor& encoded, const Tensor& mask,
                           double beta) {
    Graph g;
    return g.val(residual_loss(g, g.constant(image), g.constant(encoded), mask, beta))[0];
}

// ---- perceptual ----

RandomFeatureMetric::RandomFeatureMetric(std::uint64_t feature_seed) {
    const int ch[4] = {3, 8, 16, 32};
    for (int b = 0; b < 3; ++b) {
        Rng rng(Rng::derive(feature_seed, 0xfea7 + b));
        Tensor w(Shape{ch[b + 1], ch[b], 3, 3});
        double std = std::sqrt(2.0 / double(ch[b] * 9));
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
        Param& pw = feats_.create("feat" + std::to_string(b) + ".w", std::move(w));
        Param& pb = feats_.create("feat" + std::to_string(b) + ".b",
                                  Tensor::zeros(Shape{1, ch[b + 1], 1, 1}));
        pw.trainable = false;
        pb.trainable = false;
    }
}

Var RandomFeatureMetric::distance(Graph& g, Var a, Var b) const {
    require_same_shape(g.val(a), g.val(b), "perceptual distance");
    Var fa = a, fb = b;
    Var acc{-1};
    for (int blk = 0; blk < 3; ++blk) {
        const Param& w = feats_.get("feat" + std::to_string(blk) + ".w");
        const Param& bb = feats_.get("feat" + std::to_string(blk) + ".b");
        fa = g.elu(g.conv2d(fa, g.frozen(w), g.frozen(bb), 2, 1));
        fb = g.elu(g.conv2d(fb, g.frozen(w), g.frozen(bb), 2, 1));
        Var d = g.mean_all(g.square(g.sub(fa, fb)));
        acc = (blk == 0) ? d : g.add(acc, d);
    }
    return g.mul_scalar(acc, 1.0 / 3.0);
}

double perceptual_loss_value(const Tensor& a, const Tensor& b, std::uint64_t feature_seed) {
    RandomFeatureMetric metric(feature_seed);
    Graph g;
    return g.val(metric.distance(g, g.constant(a), g.constant(b)))[0];
}

// ---- message ----

Var message_loss(Graph& g, Var soft, const Tensor& truth_bits) {
    return g.bce_mean(soft, truth_bits, 1e-7);
}

double message_loss_value(const std::vector<double>& soft, const Bits& truth) {
    if (soft.size() != truth.size())
        throw ShapeError("message_loss: lengths differ, " + std::to_string(soft.size()) + " vs " +
                         std::to_string(truth.size()));
    Tensor p(Shape{1, int(soft.size()), 1, 1}, std::vector<double>(soft.begin(), soft.end()));
    Tensor t(Shape{1, int(truth.size()), 1, 1});
    for (std::size_t i = 0; i < truth.size(); ++i) t[i] = double(truth[i]);
    Graph g;
    return g.val(g.bce_mean(g.constant(p), t, 1e-7))[0];
}

// ---- critic ----

Critic::Critic(int image_size, std::uint64_t seed) : image_size_(image_size) {
    if (image_size < 16 || image_size % 16 != 0)
        throw ConfigError("critic image size must be a positive multiple of 16");
    const int ch[5] = {3, 8, 16, 32, 64};
    for (int i = 0; i < 4; ++i) {
        Rng rng(Rng::derive(seed, 0xc417 + i));
        Tensor w(Shape{ch[i + 1], ch[i], 3, 3});
        double std = std::sqrt(2.0 / double(ch[i] * 9));
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = rng.normal(0.0, std);
        params_.create("critic.conv" + std::to_string(i + 1) + ".w", std::move(w));
        params_.create("critic.conv" + std::to_string(i + 1) + ".b",
                       Tensor::zeros(Shape{1, ch[i + 1], 1, 1}));
    }
    int fin = 64 * (image_size / 16) * (image_size / 16);
    Rng rng(Rng::derive(seed, 0xc417 + 9));
    Tensor w(Shape{1, fin, 1, 1});
    double std = 0.01 * std::sqrt(2.0 / double(fin));
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = rng.normal(0.0, std);
    params_.create("critic.fc.w", std::move(w));
    params_.create("critic.fc.b", Tensor::zeros(Shape{1, 1, 1, 1}));
}

Var Critic::prob_encoded(Graph& g, Var images, bool trainable) {
    const Shape& s = g.val(images).shape();
    if (s.c != 3 || s.h != image_size_ || s.w != image_size_)
        throw ShapeError("critic expects (N,3," + std::to_string(image_size_) + "," +
                         std::to_string(image_size_) + "), got " + s.str());
    auto P = [&](const std::string& n) -> Var {
        return trainable ? g.param(params_.get(n)) : g.frozen(params_.get(n));
    };
    Var h = images;
    for (int i = 1; i <= 4; ++i)
        h = g.elu(g.conv2d(h, P("critic.conv" + std::to_string(i) + ".w"),
                           P("critic.conv" + std::to_string(i) + ".b"), 2, 1));
    return g.sigmoid(g.dense(h, P("critic.fc.w"), P("critic.fc.b")));
}

double Critic::step(const Tensor& real_batch, const Tensor& encoded_batch, const AdamConfig& opt) {
    if (real_batch.shape().n < 1 || encoded_batch.shape().n < 1)
        throw DomainError("critic step needs non-empty batches");
    Graph g;
    Var both = g.concat_n({g.constant(real_batch), g.constant(encoded_batch)});
    Var p = prob_encoded(g, both, true);
    int nr = real_batch.shape().n, ne = encoded_batch.shape().n;
    Tensor labels(Shape{nr + ne, 1, 1, 1});
    for (int i = 0; i < ne; ++i) labels[nr + i] = 1.0;  // real=0, encoded=1
    Var loss = g.bce_mean(p, labels, 1e-7);
    params_.zero_grads();
    g.backward(loss);
    adam_step(params_, opt, ++steps_);

    const Tensor& probs = g.val(p);
    int correct = 0;
    for (int i = 0; i < nr + ne; ++i)
        correct += ((probs[i] >= 0.5) == (labels[i] >= 0.5));
    return double(correct) / double(nr + ne);
}

Var Critic::adversarial_loss(Graph& g, Var encoded_images) {
    Var p = prob_encoded(g, encoded_images, false);
    Tensor real_label = Tensor::zeros(Shape{g.val(p).shape().n, 1, 1, 1});
    return g.bce_mean(p, real_label, 1e-7);
}

}  // namespace tagkit
