#ifndef TAGKIT_MANIP_HPP
#define TAGKIT_MANIP_HPP

// The in-training stand-in for real image manipulators: differentiable local
// edits (region replacement), a frozen autoencoder standing in for
// whole-image resynthesis, classical degradations (blur, noise, color shift,
// compression, resize cycles), and an out-of-process hook for running real
// external tools at evaluation time.

#include <cstdint>
#include <string>
#include <vector>

#include "tagkit/graph.hpp"
#include "tagkit/optim.hpp"
#include "tagkit/tensor.hpp"

namespace tagkit {

enum class ManipulationKind {
    Identity,
    RegionReplace,
    GlobalReconstruct,
    Blur,
    ColorShift,
    GaussianNoise,
    JpegProxy,
    ResizeCycle,
    External,
};

const char* manipulation_kind_name(ManipulationKind k);
ManipulationKind manipulation_kind_from_name(const std::string& s);

enum class RegionEffect { Recolor, Blur, Reconstruct };

struct ManipulationSpec {
    ManipulationKind kind = ManipulationKind::Identity;
    // 0 = exact bypass (bit-identical output), 1 = full effect; in between
    // blends input toward the manipulated image.
    double intensity = 1.0;

    // kind-specific knobs; unused ones are ignored
    int quality = 80;                              // JpegProxy, 1..100
    double scale = 0.5;                            // ResizeCycle, (0,1]
    double coverage = 0.3;                         // RegionReplace, (0,1]
    RegionEffect effect = RegionEffect::Recolor;   // RegionReplace
    double sigma = 2.0;                            // Blur (0,8]; GaussianNoise (0,1]
    std::string command;                           // External: run as `command in_dir out_dir`
    std::string work_dir;                          // External: scratch root for the png exchange

    bool differentiable() const { return kind != ManipulationKind::External; }
    void validate() const;
};

// A small convolutional autoencoder pretrained on clean images and then
// frozen. Reconstructing through it keeps the face but discards the
// low-amplitude residual the tagger writes, which is the behavior of a
// resynthesis attack worth training against.
class ProxyReconstructor {
public:
    ProxyReconstructor(int image_size, int base_channels, std::uint64_t seed);

    // Forward pass with frozen weights; input (N,3,S,S) at the training size.
    Var reconstruct(Graph& g, Var image) const;
    Tensor reconstruct_image(const Tensor& image) const;

    // MSE pretraining; returns the held-out PSNR (of the aggregate MSE) so
    // callers can enforce the >= 28 dB fit-for-purpose gate.
    double pretrain(const std::vector<Tensor>& train, const std::vector<Tensor>& heldout,
                    int steps, int batch_size, const AdamConfig& opt, std::uint64_t seed);
    double heldout_psnr(const std::vector<Tensor>& heldout) const;

    void save(const std::string& path) const;
    static ProxyReconstructor load(const std::string& path);

    static constexpr double kFitGateDb = 28.0;

    int image_size() const { return image_size_; }
    int base_channels() const { return base_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

private:
    int image_size_ = 0;
    int base_ = 0;
    ParamSet params_;

    Var forward(Graph& g, Var image, bool trainable) const;
};

// Binary {0,1} mask (1,1,S,S): an axis-aligned ellipse of area
// coverage*S^2 (within a few percent), placed uniformly at random fully
// inside the frame. Coverage beyond what an inscribed ellipse can reach
// (~0.75) degrades to the all-ones mask.
Tensor sample_region_mask(std::uint64_t rng_seed, int image_size, double coverage);

// Applies `effect` inside the mask, leaves the outside bit-identical beyond
// a 2-pixel feathering band. Recolor draws a per-channel affine map
// (gain in [0.5,1.5], bias in [-0.2,0.2]) from the seed; Blur is a fixed
// sigma=2 Gaussian; Reconstruct needs `pr`.
Var region_replace(Graph& g, Var image, const Tensor& mask, RegionEffect effect,
                   std::uint64_t rng_seed, const ProxyReconstructor* pr = nullptr);
Tensor region_replace(const Tensor& image, const Tensor& mask, RegionEffect effect,
                      std::uint64_t rng_seed, const ProxyReconstructor* pr = nullptr);

// Differentiable compression: blockwise 8x8 DCT, quantization by the
// standard luminance table at the given quality, straight-through rounding,
// inverse DCT. Non-multiple-of-8 sizes are mirror-padded and cropped back.
Var jpeg_proxy(Graph& g, Var image, int quality);
Tensor jpeg_proxy(const Tensor& image, int quality);

// Bilinear downscale by `scale` and back up to the original size.
Var resize_cycle(Graph& g, Var image, double scale);
Tensor resize_cycle(const Tensor& image, double scale);

Var global_reconstruct(Graph& g, const ProxyReconstructor& pr, Var image);
Tensor global_reconstruct(const ProxyReconstructor& pr, const Tensor& image);

// Dispatch on spec.kind; deterministic given (spec, image, seed). Output is
// clamped to [0,1]; intensity blends output = image + t*(manipulated-image),
// so out-of-effect pixels stay bit-identical. The graph form refuses
// External (it cannot carry gradients); the eager form runs it through the
// png exchange protocol.
Var apply(Graph& g, const ManipulationSpec& spec, Var image, std::uint64_t rng_seed,
          const ProxyReconstructor* pr = nullptr);
Tensor apply(const ManipulationSpec& spec, const Tensor& image, std::uint64_t rng_seed,
             const ProxyReconstructor* pr = nullptr);

// External exchange: writes work_dir/in/NNNNN.png, runs
// `command in_dir out_dir` once, reads work_dir/out/NNNNN.png back (same
// indices, same dimensions). Nonzero exit or missing output raises
// ExternalToolError carrying the tail of the captured command output.
std::vector<Tensor> external_apply(const ManipulationSpec& spec,
                                   const std::vector<Tensor>& images);

// Sampling policy for which manipulation each training item sees.
struct MixConfig {
    double w_identity = 0.20;
    double w_region_replace = 0.35;
    double w_global_reconstruct = 0.20;
    double w_jpeg = 0.10;
    double w_resize = 0.10;
    double w_noise = 0.05;
    double w_blur = 0.0;
    double w_color_shift = 0.0;

    double intensity_lo = 0.5, intensity_hi = 1.0;
    double coverage_lo = 0.1, coverage_hi = 0.5;
    int quality_lo = 50, quality_hi = 95;
    double scale_lo = 0.5, scale_hi = 1.0;
    double noise_lo = 0.02, noise_hi = 0.08;
    double blur_lo = 1.0, blur_hi = 3.0;
    bool reconstruct_effect = true;  // let RegionReplace sample the proxy effect

    void validate() const;
};

ManipulationSpec training_mix(std::uint64_t rng_seed, const MixConfig& cfg);

}  // namespace tagkit

#endif
