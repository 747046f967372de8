#ifndef TAGKIT_METRICS_HPP
#define TAGKIT_METRICS_HPP

// Image fidelity metrics between carrier and tagged images.

#include <string>

#include "tagkit/tensor.hpp"

namespace tagkit {

double mse(const Tensor& a, const Tensor& b);

// 10*log10(1/MSE) on the [0,1] scale. Identical images return +infinity,
// rendered as the string "identical" by psnr_str.
double psnr(const Tensor& a, const Tensor& b);
std::string psnr_str(double psnr_db);

// Structural similarity: grayscale by channel mean, 11x11 Gaussian window
// sigma=1.5 over fully-interior positions, k1=0.01, k2=0.03, unit range.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace tagkit

#endif
