#include <doctest.h>

#include <cmath>
#include <vector>

#include "tagkit/errors.hpp"
#include "tagkit/metrics.hpp"
#include "tagkit/rng.hpp"
#include "tagkit/tensor.hpp"

using namespace tagkit;

namespace {

Tensor rand_img(int size, Rng& rng) {
    Tensor t(Shape{1, 3, size, size});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
    return t;
}

// Independent SSIM oracle: direct per-window evaluation, no separable
// filtering, written against the same published formula.
double ssim_naive(const Tensor& a, const Tensor& b) {
    const int H = a.shape().h, W = a.shape().w, C = a.shape().c;
    std::vector<double> ga(H * W, 0.0), gb(H * W, 0.0);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                ga[y * W + x] += a.at(0, c, y, x) / C;
                gb[y * W + x] += b.at(0, c, y, x) / C;
            }
    // 11x11 gaussian weights, sigma 1.5
    double wgt[11][11], wsum = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double dy = i - 5.0, dx = j - 5.0;
            wgt[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
            wsum += wgt[i][j];
        }
    for (auto& row : wgt)
        for (auto& v : row) v /= wsum;

    const double C1 = 1e-4, C2 = 9e-4;
    double total = 0;
    int count = 0;
    for (int y = 0; y + 11 <= H; ++y)
        for (int x = 0; x + 11 <= W; ++x) {
            double ma = 0, mb = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    ma += wgt[i][j] * ga[(y + i) * W + x + j];
                    mb += wgt[i][j] * gb[(y + i) * W + x + j];
                }
            double va = 0, vb = 0, cov = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    double da = ga[(y + i) * W + x + j] - ma;
                    double db = gb[(y + i) * W + x + j] - mb;
                    va += wgt[i][j] * da * da;
                    vb += wgt[i][j] * db * db;
                    cov += wgt[i][j] * da * db;
                }
            total += ((2 * ma * mb + C1) * (2 * cov + C2)) /
                     ((ma * ma + mb * mb + C1) * (va + vb + C2));
            ++count;
        }
    return total / count;
}

}  // namespace

TEST_CASE("psnr of uniform 1/255 difference is 48.13 dB") {
    Tensor a = Tensor::full(Shape{1, 3, 16, 16}, 0.5);
    Tensor b = Tensor::full(Shape{1, 3, 16, 16}, 0.5 + 1.0 / 255.0);
    double expect = 20.0 * std::log10(255.0);
    CHECK(std::fabs(psnr(a, b) - expect) < 0.01);
    CHECK(std::fabs(psnr(a, b) - 48.13) < 0.01);
}

TEST_CASE("psnr sentinel and symmetry") {
    Rng rng(7);
    Tensor a = rand_img(12, rng), b = rand_img(12, rng);
    CHECK(std::isinf(psnr(a, a)));
    CHECK(psnr_str(psnr(a, a)) == "identical");
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)));
    CHECK_THROWS_AS(psnr(a, rand_img(13, rng)), ShapeError);
}

TEST_CASE("ssim of identical images is 1") {
    Rng rng(8);
    Tensor a = rand_img(24, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("ssim closed form for constant images") {
    Tensor a = Tensor::full(Shape{1, 3, 16, 16}, 0.25);
    Tensor b = Tensor::full(Shape{1, 3, 16, 16}, 0.75);
    double C1 = 1e-4;
    double expect = (2 * 0.25 * 0.75 + C1) / (0.25 * 0.25 + 0.75 * 0.75 + C1);
    CHECK(std::fabs(ssim(a, b) - expect) < 1e-6);
}

TEST_CASE("ssim matches an independent direct-window implementation") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = rand_img(20, rng);
        Tensor b = rand_img(20, rng);
        // include a correlated pair every other trial
        if (trial % 2 == 0)
            for (std::size_t i = 0; i < b.size(); ++i)
                b[i] = std::clamp(a[i] + 0.1 * rng.normal(), 0.0, 1.0);
        CHECK(std::fabs(ssim(a, b) - ssim_naive(a, b)) < 1e-3);
    }
}

TEST_CASE("ssim range and window-size error") {
    Rng rng(10);
    Tensor a = rand_img(16, rng), b = rand_img(16, rng);
    double v = ssim(a, b);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    Tensor small = Tensor::zeros(Shape{1, 3, 8, 8});
    CHECK_THROWS_AS(ssim(small, small), DomainError);
}
