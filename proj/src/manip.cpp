#include "tagkit/manip.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "tagkit/errors.hpp"
#include "tagkit/image_io.hpp"
#include "tagkit/rng.hpp"
#include "tagkit/serialize.hpp"

namespace fs = std::filesystem;

namespace tagkit {

const char* manipulation_kind_name(ManipulationKind k) {
    switch (k) {
        case ManipulationKind::Identity: return "identity";
        case ManipulationKind::RegionReplace: return "region_replace";
        case ManipulationKind::GlobalReconstruct: return "global_reconstruct";
        case ManipulationKind::Blur: return "blur";
        case ManipulationKind::ColorShift: return "color_shift";
        case ManipulationKind::GaussianNoise: return "gaussian_noise";
        case ManipulationKind::JpegProxy: return "jpeg_proxy";
        case ManipulationKind::ResizeCycle: return "resize_cycle";
        case ManipulationKind::External: return "external";
    }
    return "?";
}

ManipulationKind manipulation_kind_from_name(const std::string& s) {
    for (int k = 0; k <= int(ManipulationKind::External); ++k)
        if (s == manipulation_kind_name(ManipulationKind(k))) return ManipulationKind(k);
    throw ConfigError("unknown manipulation kind: " + s);
}

void ManipulationSpec::validate() const {
    if (!(intensity >= 0.0 && intensity <= 1.0))
        throw ConfigError("manipulation intensity must be in [0,1]");
    switch (kind) {
        case ManipulationKind::JpegProxy:
            if (quality < 1 || quality > 100)
                throw ConfigError("jpeg quality must be in [1,100]");
            break;
        case ManipulationKind::ResizeCycle:
            if (!(scale > 0.0 && scale <= 1.0))
                throw ConfigError("resize scale must be in (0,1]");
            break;
        case ManipulationKind::RegionReplace:
            if (!(coverage > 0.0 && coverage <= 1.0))
                throw ConfigError("region coverage must be in (0,1]");
            break;
        case ManipulationKind::Blur:
            if (!(sigma > 0.0 && sigma <= 8.0))
                throw ConfigError("blur sigma must be in (0,8]");
            break;
        case ManipulationKind::GaussianNoise:
            if (!(sigma > 0.0 && sigma <= 1.0))
                throw ConfigError("noise sigma must be in (0,1]");
            break;
        case ManipulationKind::External:
            if (command.empty()) throw ConfigError("external manipulation needs a command");
            if (work_dir.empty()) throw ConfigError("external manipulation needs a work dir");
            break;
        default: break;
    }
}

// ---- proxy reconstructor ----

namespace {

Tensor he_conv(Rng& rng, int cout, int cin, int k, double scale = 1.0) {
    Tensor w(Shape{cout, cin, k, k});
    double std = scale * std::sqrt(2.0 / double(cin * k * k));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return w;
}

}  // namespace

ProxyReconstructor::ProxyReconstructor(int image_size, int base_channels, std::uint64_t seed)
    : image_size_(image_size), base_(base_channels) {
    if (image_size < 8 || image_size % 4 != 0)
        throw ConfigError("proxy image size must be a multiple of 4, >= 8");
    if (base_channels < 2) throw ConfigError("proxy base channels must be >= 2");
    const int B = base_;
    int layer = 0;
    auto conv = [&](const std::string& name, int cout, int cin) {
        Rng rng(Rng::derive(seed, 0x9f0c7 + layer++));
        params_.create(name + ".w", he_conv(rng, cout, cin, 3));
        params_.create(name + ".b", Tensor::zeros(Shape{1, cout, 1, 1}));
    };
    conv("proxy.enc0", B, 3);
    conv("proxy.enc1", 2 * B, B);
    conv("proxy.mid", 2 * B, 2 * B);
    conv("proxy.dec0", B, 2 * B);
    conv("proxy.dec1", 3, B);
}

Var ProxyReconstructor::forward(Graph& g, Var image, bool trainable) const {
    const Shape& s = g.val(image).shape();
    if (s.c != 3 || s.h != image_size_ || s.w != image_size_)
        throw ShapeError("proxy expects (N,3," + std::to_string(image_size_) + "," +
                         std::to_string(image_size_) + "), got " + s.str());
    auto P = [&](const std::string& n) -> Var {
        const Param& p = params_.get(n);
        return trainable ? g.param(const_cast<Param&>(p)) : g.frozen(p);
    };
    Var h = g.elu(g.conv2d(image, P("proxy.enc0.w"), P("proxy.enc0.b"), 2, 1));
    h = g.elu(g.conv2d(h, P("proxy.enc1.w"), P("proxy.enc1.b"), 2, 1));
    h = g.elu(g.conv2d(h, P("proxy.mid.w"), P("proxy.mid.b"), 1, 1));
    h = g.resize_bilinear(h, image_size_ / 2, image_size_ / 2);
    h = g.elu(g.conv2d(h, P("proxy.dec0.w"), P("proxy.dec0.b"), 1, 1));
    h = g.resize_bilinear(h, image_size_, image_size_);
    h = g.conv2d(h, P("proxy.dec1.w"), P("proxy.dec1.b"), 1, 1);
    return g.clamp01(g.sigmoid(h));
}

Var ProxyReconstructor::reconstruct(Graph& g, Var image) const {
    return forward(g, image, false);
}

Tensor ProxyReconstructor::reconstruct_image(const Tensor& image) const {
    Graph g;
    return g.val(reconstruct(g, g.constant(image)));
}

double ProxyReconstructor::pretrain(const std::vector<Tensor>& train,
                                    const std::vector<Tensor>& heldout, int steps,
                                    int batch_size, const AdamConfig& opt,
                                    std::uint64_t seed) {
    if (train.empty()) throw ConfigError("proxy pretraining needs training images");
    if (heldout.empty()) throw ConfigError("proxy pretraining needs held-out images");
    if (steps < 1 || batch_size < 1) throw ConfigError("steps and batch size must be >= 1");
    for (Param* p : params_.all()) p->trainable = true;
    Rng rng(Rng::derive(seed, 0x93e9));
    for (int step = 0; step < steps; ++step) {
        Tensor x(Shape{batch_size, 3, image_size_, image_size_});
        const Shape want{1, 3, image_size_, image_size_};
        for (int b = 0; b < batch_size; ++b) {
            const Tensor& img = train[rng.uniform_int(train.size())];
            if (img.shape() != want)
                throw ShapeError("proxy pretraining image " + img.shape().str() +
                                 ", expected " + want.str());
            std::copy(img.data(), img.data() + img.size(),
                      x.data() + std::size_t(b) * img.size());
        }
        Graph g;
        Var xi = g.constant(x);
        Var loss = g.mean_all(g.square(g.sub(forward(g, xi, true), xi)));
        if (!std::isfinite(g.val(loss)[0])) throw NumericError("proxy pretraining diverged");
        params_.zero_grads();
        g.backward(loss);
        adam_step(params_, opt, step + 1);
    }
    // frozen from here on; the tagger must not be able to adapt its attacker
    for (Param* p : params_.all()) p->trainable = false;
    return heldout_psnr(heldout);
}

double ProxyReconstructor::heldout_psnr(const std::vector<Tensor>& heldout) const {
    if (heldout.empty()) throw ConfigError("held-out set is empty");
    double se = 0.0;
    std::size_t n = 0;
    for (const Tensor& img : heldout) {
        Tensor rec = reconstruct_image(img);
        for (std::size_t i = 0; i < img.size(); ++i) {
            double d = rec[i] - img[i];
            se += d * d;
        }
        n += img.size();
    }
    double m = se / double(n);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

void ProxyReconstructor::save(const std::string& path) const {
    nlohmann::json meta{{"kind", "proxy_reconstructor"},
                        {"image_size", image_size_},
                        {"base_channels", base_}};
    save_param_blob(path, meta.dump(), params_);
}

ProxyReconstructor ProxyReconstructor::load(const std::string& path) {
    auto meta = nlohmann::json::parse(peek_param_blob_meta(path), nullptr, false);
    if (meta.is_discarded() || meta.value("kind", "") != "proxy_reconstructor")
        throw CheckpointError(path + " is not a reconstruction proxy");
    ProxyReconstructor pr(meta.at("image_size").get<int>(),
                          meta.at("base_channels").get<int>(), 0);
    load_param_blob(path, pr.params_);
    for (Param* p : pr.params_.all()) p->trainable = false;
    return pr;
}

// ---- region masks ----

namespace {

constexpr double kPi = 3.14159265358979323846;

// pixels whose centers fall inside the ellipse
int rasterize_ellipse(Tensor& m, double cx, double cy, double a, double b) {
    const Shape& s = m.shape();
    m.fill(0.0);
    int count = 0;
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            double dx = (x + 0.5 - cx) / a, dy = (y + 0.5 - cy) / b;
            if (dx * dx + dy * dy <= 1.0) {
                m.at(0, 0, y, x) = 1.0;
                ++count;
            }
        }
    return count;
}

}  // namespace

Tensor sample_region_mask(std::uint64_t rng_seed, int image_size, double coverage) {
    if (image_size < 8) throw ConfigError("mask size must be >= 8");
    if (!(coverage > 0.0 && coverage <= 1.0))
        throw ConfigError("coverage must be in (0,1]");
    Tensor m(Shape{1, 1, image_size, image_size});
    const double S = image_size;
    const double target = coverage * S * S;
    const double amax = S / 2.0 - 0.5;
    // an inscribed ellipse cannot cover much beyond pi/4 of the frame
    if (target > 0.9 * kPi * amax * amax) {
        m.fill(1.0);
        return m;
    }
    Rng rng(Rng::derive(rng_seed, 0x3a5c));
    double rho = std::exp(rng.uniform(-0.45, 0.45));
    double a = std::clamp(std::sqrt(target * rho / kPi), target / (kPi * amax), amax);
    double b = target / (kPi * a);
    double cx = rng.uniform(a, S - a);
    double cy = rng.uniform(b, S - b);
    // rasterization quantizes the area; two correction rounds pull the pixel
    // count back to the requested fraction
    for (int iter = 0;; ++iter) {
        int count = rasterize_ellipse(m, cx, cy, a, b);
        if (iter == 2) break;
        double f = std::sqrt(target / std::max(1.0, double(count)));
        a = std::min(a * f, amax);
        b = std::min(b * f, amax);
        cx = std::clamp(cx, a, S - a);
        cy = std::clamp(cy, b, S - b);
    }
    return m;
}

// ---- region replacement ----

Var region_replace(Graph& g, Var image, const Tensor& mask, RegionEffect effect,
                   std::uint64_t rng_seed, const ProxyReconstructor* pr) {
    const Shape& s = g.val(image).shape();
    const Shape& ms = mask.shape();
    if (ms.n != 1 || ms.c != 1 || ms.h != s.h || ms.w != s.w)
        throw ShapeError("region mask must be (1,1," + std::to_string(s.h) + "," +
                         std::to_string(s.w) + "), got " + ms.str());
    bool any = false, all = true;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] != 0.0 && mask[i] != 1.0)
            throw RangeError("region mask must be binary {0,1}");
        any |= mask[i] == 1.0;
        all &= mask[i] == 1.0;
    }
    if (!any) return image;

    Var eff;
    switch (effect) {
        case RegionEffect::Recolor: {
            Rng rng(Rng::derive(rng_seed, 0xc010));
            Tensor gain(Shape{1, s.c, s.h, s.w}), bias(Shape{1, s.c, s.h, s.w});
            for (int c = 0; c < s.c; ++c) {
                double gv = rng.uniform(0.5, 1.5), bv = rng.uniform(-0.2, 0.2);
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x) {
                        gain.at(0, c, y, x) = gv;
                        bias.at(0, c, y, x) = bv;
                    }
            }
            eff = g.add_const(g.mul_const(image, gain), bias);
            break;
        }
        case RegionEffect::Blur:
            eff = g.gauss_blur(image, 2.0);
            break;
        case RegionEffect::Reconstruct:
            if (!pr)
                throw DependencyError("region reconstruct needs a pretrained proxy");
            eff = pr->reconstruct(g, image);
            break;
    }
    if (all) return eff;

    // Feather over ~2 pixels. The blurred mask is exactly zero outside the
    // mask dilated by the kernel radius, so pixels beyond the band come out
    // bit-identical through image + f*(eff - image).
    Tensor f = g.val(g.gauss_blur(g.constant(mask), 0.6));
    Tensor f3(Shape{1, s.c, s.h, s.w});
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) f3.at(0, c, y, x) = f.at(0, 0, y, x);
    return g.add(image, g.mul_const(g.sub(eff, image), f3));
}

Tensor region_replace(const Tensor& image, const Tensor& mask, RegionEffect effect,
                      std::uint64_t rng_seed, const ProxyReconstructor* pr) {
    Graph g;
    return g.val(region_replace(g, g.constant(image), mask, effect, rng_seed, pr));
}

// ---- compression proxy ----

namespace {

// standard luminance quantization table (Annex K), zig-zag unrolled row-major
const int kLumaQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

std::array<double, 64> scaled_quant(int quality) {
    int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<double, 64> q;
    for (int i = 0; i < 64; ++i)
        q[i] = std::clamp((kLumaQuant[i] * s + 50) / 100, 1, 255);
    return q;
}

}  // namespace

Var jpeg_proxy(Graph& g, Var image, int quality) {
    if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must be in [1,100]");
    const Shape s = g.val(image).shape();
    const int ph = (8 - s.h % 8) % 8, pw = (8 - s.w % 8) % 8;
    Var y = g.add_scalar(g.mul_scalar(image, 255.0), -128.0);
    if (ph || pw) y = g.pad_reflect(y, ph, pw);
    const Shape sp = g.val(y).shape();
    auto q = scaled_quant(quality);
    Tensor qt(Shape{1, sp.c, sp.h, sp.w}), iqt(Shape{1, sp.c, sp.h, sp.w});
    for (int c = 0; c < sp.c; ++c)
        for (int yy = 0; yy < sp.h; ++yy)
            for (int xx = 0; xx < sp.w; ++xx) {
                double qv = q[(yy % 8) * 8 + (xx % 8)];
                qt.at(0, c, yy, xx) = qv;
                iqt.at(0, c, yy, xx) = 1.0 / qv;
            }
    Var coef = g.round_st(g.mul_const(g.dct8(y, false), iqt));
    Var z = g.dct8(g.mul_const(coef, qt), true);
    if (ph || pw) z = g.crop_tl(z, s.h, s.w);
    return g.clamp01(g.mul_scalar(g.add_scalar(z, 128.0), 1.0 / 255.0));
}

Tensor jpeg_proxy(const Tensor& image, int quality) {
    Graph g;
    return g.val(jpeg_proxy(g, g.constant(image), quality));
}

// ---- resize cycle ----

Var resize_cycle(Graph& g, Var image, double scale) {
    if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("resize scale must be in (0,1]");
    const Shape s = g.val(image).shape();
    int dh = int(std::lround(s.h * scale)), dw = int(std::lround(s.w * scale));
    if (dh < 8 || dw < 8)
        throw ConfigError("resize cycle target " + std::to_string(dh) + "x" +
                          std::to_string(dw) + " is below 8px");
    if (dh == s.h && dw == s.w) return image;
    return g.resize_bilinear(g.resize_bilinear(image, dh, dw), s.h, s.w);
}

Tensor resize_cycle(const Tensor& image, double scale) {
    Graph g;
    return g.val(resize_cycle(g, g.constant(image), scale));
}

// ---- global reconstruction ----

Var global_reconstruct(Graph& g, const ProxyReconstructor& pr, Var image) {
    return pr.reconstruct(g, image);
}

Tensor global_reconstruct(const ProxyReconstructor& pr, const Tensor& image) {
    return pr.reconstruct_image(image);
}

// ---- dispatch ----

Var apply(Graph& g, const ManipulationSpec& spec, Var image, std::uint64_t rng_seed,
          const ProxyReconstructor* pr) {
    spec.validate();
    if (!spec.differentiable())
        throw ConfigError("external manipulations cannot run inside a gradient graph");
    if (spec.intensity == 0.0 || spec.kind == ManipulationKind::Identity) return image;

    const Shape s = g.val(image).shape();
    Var m;
    switch (spec.kind) {
        case ManipulationKind::RegionReplace: {
            Tensor mask = sample_region_mask(Rng::derive(rng_seed, 1), s.h, spec.coverage);
            m = region_replace(g, image, mask, spec.effect, Rng::derive(rng_seed, 2), pr);
            break;
        }
        case ManipulationKind::GlobalReconstruct:
            if (!pr) throw DependencyError("global reconstruct needs a pretrained proxy");
            m = pr->reconstruct(g, image);
            break;
        case ManipulationKind::Blur:
            m = g.gauss_blur(image, spec.sigma);
            break;
        case ManipulationKind::ColorShift: {
            Rng rng(Rng::derive(rng_seed, 4));
            Tensor gain(Shape{1, s.c, s.h, s.w}), bias(Shape{1, s.c, s.h, s.w});
            for (int c = 0; c < s.c; ++c) {
                double gv = rng.uniform(0.5, 1.5), bv = rng.uniform(-0.2, 0.2);
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x) {
                        gain.at(0, c, y, x) = gv;
                        bias.at(0, c, y, x) = bv;
                    }
            }
            m = g.add_const(g.mul_const(image, gain), bias);
            break;
        }
        case ManipulationKind::GaussianNoise: {
            Rng rng(Rng::derive(rng_seed, 3));
            Tensor nz(s);
            for (std::size_t i = 0; i < nz.size(); ++i) nz[i] = rng.normal(0.0, spec.sigma);
            m = g.add_const(image, nz);
            break;
        }
        case ManipulationKind::JpegProxy:
            m = jpeg_proxy(g, image, spec.quality);
            break;
        case ManipulationKind::ResizeCycle:
            m = resize_cycle(g, image, spec.scale);
            break;
        default:
            return image;  // Identity handled above; unreachable
    }
    if (spec.intensity < 1.0)
        m = g.add(image, g.mul_scalar(g.sub(m, image), spec.intensity));
    return g.clamp01(m);
}

Tensor apply(const ManipulationSpec& spec, const Tensor& image, std::uint64_t rng_seed,
             const ProxyReconstructor* pr) {
    spec.validate();
    if (spec.kind == ManipulationKind::External) {
        if (spec.intensity == 0.0) return image;
        std::vector<Tensor> ins;
        const Shape& s = image.shape();
        for (int n = 0; n < s.n; ++n) {
            Tensor one(Shape{1, s.c, s.h, s.w});
            std::copy(image.data() + std::size_t(n) * one.size(),
                      image.data() + std::size_t(n + 1) * one.size(), one.data());
            ins.push_back(std::move(one));
        }
        std::vector<Tensor> outs = external_apply(spec, ins);
        Tensor result(s);
        const double t = spec.intensity;
        for (int n = 0; n < s.n; ++n) {
            const Tensor& a = ins[n];
            const Tensor& b = outs[n];
            double* dst = result.data() + std::size_t(n) * a.size();
            for (std::size_t i = 0; i < a.size(); ++i)
                dst[i] = std::clamp(a[i] + t * (b[i] - a[i]), 0.0, 1.0);
        }
        return result;
    }
    Graph g;
    return g.val(apply(g, spec, g.constant(image), rng_seed, pr));
}

// ---- external exchange ----

namespace {

std::string log_tail(const fs::path& log) {
    std::ifstream in(log, std::ios::binary);
    if (!in) return "(no command output captured)";
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (all.size() > 1024) all = "..." + all.substr(all.size() - 1024);
    return all.empty() ? "(command produced no output)" : all;
}

std::string index_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu.png", i);
    return buf;
}

}  // namespace

std::vector<Tensor> external_apply(const ManipulationSpec& spec,
                                   const std::vector<Tensor>& images) {
    spec.validate();
    if (spec.kind != ManipulationKind::External)
        throw ConfigError("external_apply requires an external spec");
    if (images.empty()) return {};

    fs::path root(spec.work_dir);
    fs::path in_dir = root / "in", out_dir = root / "out";
    std::error_code ec;
    fs::create_directories(in_dir, ec);
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(in_dir) || !fs::is_directory(out_dir))
        throw IoError("cannot create exchange directories under " + spec.work_dir);

    for (std::size_t i = 0; i < images.size(); ++i) {
        save_png((in_dir / index_name(i)).string(), images[i]);
        fs::remove(out_dir / index_name(i), ec);  // stale outputs must not count
    }

    fs::path log = root / "command.log";
    std::string cmd = spec.command + " '" + in_dir.string() + "' '" + out_dir.string() +
                      "' > '" + log.string() + "' 2>&1";
    int rc = std::system(cmd.c_str());
    if (rc != 0)
        throw ExternalToolError("command `" + spec.command + "` exited with status " +
                                std::to_string(rc) + "; output tail:\n" + log_tail(log));

    std::vector<Tensor> outs;
    std::string missing;
    for (std::size_t i = 0; i < images.size(); ++i) {
        fs::path p = out_dir / index_name(i);
        if (!fs::exists(p)) {
            missing += (missing.empty() ? "" : ", ") + index_name(i);
            continue;
        }
        Tensor t = load_image(p.string());
        if (t.shape() != images[i].shape())
            throw ExternalToolError("output " + index_name(i) + " is " + t.shape().str() +
                                    ", expected " + images[i].shape().str());
        outs.push_back(std::move(t));
    }
    if (!missing.empty())
        throw ExternalToolError("command `" + spec.command + "` left outputs missing: " +
                                missing + "; output tail:\n" + log_tail(log));
    return outs;
}

// ---- training mix ----

void MixConfig::validate() const {
    const double ws[] = {w_identity, w_region_replace, w_global_reconstruct, w_jpeg,
                         w_resize,   w_noise,          w_blur,               w_color_shift};
    double sum = 0.0;
    for (double w : ws) {
        if (w < 0.0) throw ConfigError("mix weights must be >= 0");
        sum += w;
    }
    if (sum <= 0.0) throw ConfigError("mix weights must not all be zero");
    if (!(intensity_lo >= 0.0 && intensity_hi <= 1.0 && intensity_lo <= intensity_hi))
        throw ConfigError("intensity range must satisfy 0 <= lo <= hi <= 1");
    if (!(coverage_lo > 0.0 && coverage_hi <= 1.0 && coverage_lo <= coverage_hi))
        throw ConfigError("coverage range must sit inside (0,1]");
    if (!(quality_lo >= 1 && quality_hi <= 100 && quality_lo <= quality_hi))
        throw ConfigError("quality range must sit inside [1,100]");
    if (!(scale_lo > 0.0 && scale_hi <= 1.0 && scale_lo <= scale_hi))
        throw ConfigError("scale range must sit inside (0,1]");
    if (!(noise_lo > 0.0 && noise_hi <= 1.0 && noise_lo <= noise_hi))
        throw ConfigError("noise range must sit inside (0,1]");
    if (!(blur_lo > 0.0 && blur_hi <= 8.0 && blur_lo <= blur_hi))
        throw ConfigError("blur range must sit inside (0,8]");
}

ManipulationSpec training_mix(std::uint64_t rng_seed, const MixConfig& cfg) {
    cfg.validate();
    Rng rng(Rng::derive(rng_seed, 0x317c));
    static const ManipulationKind kinds[8] = {
        ManipulationKind::Identity,    ManipulationKind::RegionReplace,
        ManipulationKind::GlobalReconstruct, ManipulationKind::JpegProxy,
        ManipulationKind::ResizeCycle, ManipulationKind::GaussianNoise,
        ManipulationKind::Blur,        ManipulationKind::ColorShift};
    ManipulationSpec spec;
    spec.kind = kinds[rng.categorical({cfg.w_identity, cfg.w_region_replace,
                                       cfg.w_global_reconstruct, cfg.w_jpeg, cfg.w_resize,
                                       cfg.w_noise, cfg.w_blur, cfg.w_color_shift})];
    spec.intensity = rng.uniform(cfg.intensity_lo, cfg.intensity_hi);
    switch (spec.kind) {
        case ManipulationKind::RegionReplace:
            spec.coverage = rng.uniform(cfg.coverage_lo, cfg.coverage_hi);
            spec.effect = RegionEffect(rng.uniform_int(cfg.reconstruct_effect ? 3 : 2));
            break;
        case ManipulationKind::JpegProxy:
            spec.quality =
                cfg.quality_lo + int(rng.uniform_int(cfg.quality_hi - cfg.quality_lo + 1));
            break;
        case ManipulationKind::ResizeCycle:
            spec.scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
            break;
        case ManipulationKind::GaussianNoise:
            spec.sigma = rng.uniform(cfg.noise_lo, cfg.noise_hi);
            break;
        case ManipulationKind::Blur:
            spec.sigma = rng.uniform(cfg.blur_lo, cfg.blur_hi);
            break;
        default: break;
    }
    return spec;
}

}  // namespace tagkit
