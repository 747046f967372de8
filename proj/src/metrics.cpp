#include "tagkit/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "tagkit/errors.hpp"

namespace tagkit {

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s / double(a.size());
}

double psnr(const Tensor& a, const Tensor& b) {
    double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

std::string psnr_str(double psnr_db) {
    if (std::isinf(psnr_db)) return "identical";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", psnr_db);
    return std::string(buf);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (k1*L)^2, L=1
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& window() {
    static const std::vector<double> w = [] {
        std::vector<double> k(kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            double d = i - (kWin - 1) / 2.0;
            k[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w;
}

// Grayscale by channel mean; accepts (N,3,H,W) with N=1 or (N,1,H,W).
std::vector<double> to_gray(const Tensor& t, int& h, int& w) {
    const Shape& s = t.shape();
    if (s.n != 1) throw ShapeError("ssim expects a single image, got batch " + s.str());
    h = s.h;
    w = s.w;
    std::vector<double> g(std::size_t(h) * w, 0.0);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) g[std::size_t(y) * w + x] += t.at(0, c, y, x);
    for (double& v : g) v /= s.c;
    return g;
}

// Separable valid-mode Gaussian filtering of an h×w plane.
std::vector<double> filt_valid(const std::vector<double>& img, int h, int w, int& oh, int& ow) {
    const auto& k = window();
    oh = h - kWin + 1;
    ow = w - kWin + 1;
    std::vector<double> tmp(std::size_t(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < kWin; ++t) acc += k[t] * img[std::size_t(y) * w + x + t];
            tmp[std::size_t(y) * ow + x] = acc;
        }
    std::vector<double> out(std::size_t(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < kWin; ++t) acc += k[t] * tmp[std::size_t(y + t) * ow + x];
            out[std::size_t(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    int h = 0, w = 0;
    std::vector<double> ga = to_gray(a, h, w);
    std::vector<double> gb = to_gray(b, h, w);
    if (h < kWin || w < kWin)
        throw DomainError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                          " smaller than the 11x11 window");

    std::size_t npix = std::size_t(h) * w;
    std::vector<double> aa(npix), bb(npix), ab(npix);
    for (std::size_t i = 0; i < npix; ++i) {
        aa[i] = ga[i] * ga[i];
        bb[i] = gb[i] * gb[i];
        ab[i] = ga[i] * gb[i];
    }
    int oh = 0, ow = 0;
    auto mu_a = filt_valid(ga, h, w, oh, ow);
    auto mu_b = filt_valid(gb, h, w, oh, ow);
    auto e_aa = filt_valid(aa, h, w, oh, ow);
    auto e_bb = filt_valid(bb, h, w, oh, ow);
    auto e_ab = filt_valid(ab, h, w, oh, ow);

    double total = 0.0;
    std::size_t cnt = std::size_t(oh) * ow;
    for (std::size_t i = 0; i < cnt; ++i) {
        double ma = mu_a[i], mb = mu_b[i];
        double va = e_aa[i] - ma * ma;
        double vb = e_bb[i] - mb * mb;
        double cov = e_ab[i] - ma * mb;
        double v = ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                   ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
        total += v;
    }
    return total / double(cnt);
}

}  // namespace tagkit
