#ifndef TAGKIT_LOSSES_HPP
#define TAGKIT_LOSSES_HPP

// The four training loss terms, the critic network behind the adversarial
// term, and the warm-up/ramp weight schedule.

#include <cstdint>
#include <memory>

#include "tagkit/graph.hpp"
#include "tagkit/message_codec.hpp"
#include "tagkit/optim.hpp"
#include "tagkit/tensor.hpp"

namespace tagkit {

struct LossWeights {
    double residual = 0.0;    // λ_R
    double perceptual = 0.0;  // λ_P
    double critic = 0.0;      // λ_C
    double message = 1.0;     // λ_M
};

struct LossBreakdown {
    double residual = 0.0;
    double perceptual = 0.0;
    double critic = 0.0;
    double message = 0.0;
    double total = 0.0;
};

struct ScheduleConfig {
    int warmup_steps = 1000;
    int ramp_steps = 1000;
    double lambda_r_max = 1.5;
    double lambda_p_max = 1.0;
    double lambda_c_max = 0.1;
    double lambda_m = 1.0;
    void validate() const;
};

// Zero λ_{R,P,C} through warm-up, linear ramp to the maxima, then constant;
// λ_M never moves.
LossWeights schedule_weights(int step, const ScheduleConfig& sc);

double total_loss(const LossBreakdown& parts, const LossWeights& w);

// ---- graph-side loss builders (used inside the training graph) ----

// Mask-weighted squared residual: weight = 1 − β·mask, so high-mask (safe)
// regions are penalized less. mask is (1,1,S,S).
Var residual_loss(Graph& g, Var image, Var encoded, const Tensor& mask, double beta = 0.5);

Var message_loss(Graph& g, Var soft, const Tensor& truth_bits);

// ---- perceptual distance ----

class PerceptualMetric {
public:
    virtual ~PerceptualMetric() = default;
    virtual Var distance(Graph& g, Var a, Var b) const = 0;
};

// Fixed, seeded, never-trained conv feature stack; mean squared feature
// distance averaged over three blocks. A learned metric can be swapped in
// through the PerceptualMetric interface.
class RandomFeatureMetric : public PerceptualMetric {
public:
    explicit RandomFeatureMetric(std::uint64_t feature_seed);
    Var distance(Graph& g, Var a, Var b) const override;

private:
    ParamSet feats_;
};

constexpr std::uint64_t kDefaultFeatureSeed = 2718281828;

// Eager wrappers for single pairs.
double residual_loss_value(const Tensor& image, const Tensor& encoded, const Tensor& mask,
                           double beta = 0.5);
double perceptual_loss_value(const Tensor& a, const Tensor& b,
                             std::uint64_t feature_seed = kDefaultFeatureSeed);
double message_loss_value(const std::vector<double>& soft, const Bits& truth);

// ---- critic ----

class Critic {
public:
    Critic(int image_size, std::uint64_t seed);

    // P(encoded) per item, (N,1,1,1). trainable=false records the critic as
    // constants so encoder gradients do not leak into it.
    Var prob_encoded(Graph& g, Var images, bool trainable);

    // One BCE step labeling real=0 / encoded=1; returns classification
    // accuracy over both batches at threshold 0.5.
    double step(const Tensor& real_batch, const Tensor& encoded_batch, const AdamConfig& opt);

    // Encoder-side adversarial term: BCE of P(encoded) against the real
    // label, i.e. mean of −log(1 − p).
    Var adversarial_loss(Graph& g, Var encoded_images);

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    int image_size() const { return image_size_; }
    long steps_taken() const { return steps_; }

private:
    int image_size_;
    ParamSet params_;
    long steps_ = 0;
};

}  // namespace tagkit

#endif
