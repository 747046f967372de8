#ifndef TAGKIT_TRAINER_HPP
#define TAGKIT_TRAINER_HPP

// End-to-end optimization. Each step encodes a batch, pushes every item
// through a manipulation sampled from the training mix inside the same
// graph, decodes, and descends the weighted objective; the critic takes one
// step of its own per tagger step.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "tagkit/data_pipeline.hpp"
#include "tagkit/losses.hpp"
#include "tagkit/manip.hpp"
#include "tagkit/model.hpp"
#include "tagkit/optim.hpp"

namespace tagkit {

struct TrainConfig {
    ModelConfig model;
    ScheduleConfig schedule;
    MixConfig mix;
    DatasetConfig data;

    int steps = 5000;
    int batch_size = 16;
    double learning_rate = 1e-4;         // tagger Adam
    double critic_learning_rate = 1e-4;  // critic Adam

    // Fraction of each batch decoded from untouched images against flat 0.5
    // targets, which teaches the decoder to stay uncommitted on untagged
    // inputs instead of hallucinating a message.
    double null_fraction = 0.25;

    MaskKind mask = MaskKind::BorderWeighted;
    std::uint64_t seed = 1;
    std::uint64_t feature_seed = kDefaultFeatureSeed;

    std::string out_dir = "run";
    int checkpoint_every = 0;  // also checkpoint every N steps (0 = final only)

    // Frozen reconstructor for the reconstruction manipulations. Empty path
    // plus auto_proxy lets train() pretrain one from the training split.
    std::string proxy_path;
    bool auto_proxy = true;

    void validate() const;
};

// Round-trip through the on-disk config format (JSON; unknown keys are
// rejected so typos fail loudly).
TrainConfig train_config_from_json(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_json(const TrainConfig& cfg);

struct StepLog {
    long step = 0;              // 1-based count of finished steps
    LossWeights weights;        // schedule at the step that just ran
    LossBreakdown losses;       // unweighted terms plus the weighted total
    double bit_accuracy = 0.0;  // message rows only, after repetition decode
    double critic_accuracy = 0.0;
};

bool mix_needs_proxy(const MixConfig& mix);

class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    // One optimizer step on an (N,3,S,S) batch. Deterministic given the
    // construction seed and the internal step counter; a non-finite loss
    // raises NumericError naming the batch seed.
    StepLog train_step(const Tensor& batch);

    long step() const { return step_; }
    TaggerModel& model() { return model_; }
    const TaggerModel& model() const { return model_; }
    Critic& critic() { return critic_; }
    void set_proxy(ProxyReconstructor pr);
    bool has_proxy() const { return proxy_.has_value(); }
    const TrainConfig& config() const { return cfg_; }

private:
    TrainConfig cfg_;
    TaggerModel model_;
    Critic critic_;
    RandomFeatureMetric metric_;
    std::optional<ProxyReconstructor> proxy_;
    Tensor mask_;
    AdamConfig tagger_opt_;
    AdamConfig critic_opt_;
    long step_ = 0;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string history_path;
    StepLog last;
};

// Full run: builds the dataset, readies the proxy if the mix needs one,
// loops train_step over seeded epoch shuffles, writes cfg.out_dir/history.csv
// (step,lambda_r,lambda_p,lambda_c,lambda_m,loss_r,loss_p,loss_c,loss_m,
// total,bit_accuracy) and checkpoints. `progress`, if given, sees every log.
TrainResult train(const TrainConfig& cfg,
                  const std::function<void(const StepLog&)>& progress = {});

// Pretrains a reconstructor on the dataset's train split until it clears its
// held-out fidelity gate (up to three rounds at a decaying rate); stalling
// raises NumericError rather than handing back a half-fit proxy.
ProxyReconstructor fit_proxy(const Dataset& ds, int image_size, std::uint64_t seed);

// A checkpoint holds the model and critic parameters plus a meta line with
// the architecture and step count, so loading rebuilds both unambiguously.
void save_checkpoint(const std::string& path, const TaggerModel& model,
                     const Critic& critic, long step);

struct Checkpoint {
    ModelConfig config;
    long step = 0;
    TaggerModel model;
    Critic critic;
};

Checkpoint load_checkpoint(const std::string& path);
// Same, but refuses (ShapeError) a file whose architecture differs from
// `expected` instead of silently adapting to it.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace tagkit

#endif
