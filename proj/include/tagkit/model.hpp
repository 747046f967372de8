#ifndef TAGKIT_MODEL_HPP
#define TAGKIT_MODEL_HPP

// The trainable tagging network: a message-conditioned U-Net encoder that
// writes an imperceptible residual, and a conv decoder that reads the message
// back. Both are expressed as graph builders so training can differentiate
// end-to-end through whatever sits between them.

#include <cstdint>
#include <string>
#include <vector>

#include "tagkit/graph.hpp"
#include "tagkit/message_codec.hpp"
#include "tagkit/tensor.hpp"

namespace tagkit {

enum class EmbedLevel { Raw, Early, Late };

const char* embed_level_name(EmbedLevel l);
EmbedLevel embed_level_from_name(const std::string& s);

struct ModelConfig {
    int image_size = 64;
    int n_bits = 20;
    int repetition_factor = 1;
    EmbedLevel embed_level = EmbedLevel::Late;
    int base_channels = 32;
    int unet_depth = 4;
    double residual_scale = 0.15;  // max per-pixel deviation of the residual

    int payload_bits() const { return n_bits * repetition_factor; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class MaskKind { Uniform, BorderWeighted };

// (1,1,S,S) weight grid. Uniform: all ones. BorderWeighted: 0.5 at the image
// center rising linearly with radius to 1.0 at the corners (face interiors
// are the most-manipulated regions, so they carry less embedding weight).
Tensor default_mask(int image_size, MaskKind kind);

class TaggerModel {
public:
    TaggerModel(const ModelConfig& cfg, std::uint64_t seed);

    // Graph builders; image is (N,3,S,S), bits is (N,payload,1,1) with 0/1
    // entries. encode returns the clamped tagged image, decode the sigmoid
    // soft bits (N,payload,1,1).
    Var encode(Graph& g, Var image, const Tensor& bits) const;
    Var decode(Graph& g, Var image) const;

    // Eager single-image conveniences. The mask argument participates in the
    // training losses, not in the forward pass; it is accepted here so call
    // sites hold one signature.
    Tensor encode_image(const Tensor& image, const Bits& bits, const Tensor& mask) const;
    std::vector<double> decode_soft(const Tensor& image) const;

    // bit = 1 iff soft >= 0.5; then majority-decode if repetition is on.
    static Bits hard_decision(const std::vector<double>& soft, const MessageSpec& spec);

    static Tensor bits_batch_tensor(const std::vector<Bits>& batch);

    const ModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    MessageSpec message_spec() const { return MessageSpec{cfg_.n_bits, cfg_.repetition_factor}; }

private:
    ModelConfig cfg_;
    ParamSet params_;

    Var message_plane(Graph& g, const Tensor& bits, int level_size) const;
};

}  // namespace tagkit

#endif
