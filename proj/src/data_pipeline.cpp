#include "tagkit/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tagkit/errors.hpp"
#include "tagkit/image_io.hpp"
#include "tagkit/rng.hpp"

namespace fs = std::filesystem;

namespace tagkit {

// ---- synthetic faces ----

namespace {

struct Color {
    double r, g, b;
};

double smooth01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

void blend_px(Tensor& img, int y, int x, const Color& c, double alpha) {
    if (alpha <= 0.0) return;
    img.at(0, 0, y, x) += alpha * (c.r - img.at(0, 0, y, x));
    img.at(0, 1, y, x) += alpha * (c.g - img.at(0, 1, y, x));
    img.at(0, 2, y, x) += alpha * (c.b - img.at(0, 2, y, x));
}

// Soft-edged ellipse; edge transition roughly `edge` pixels wide.
void draw_ellipse(Tensor& img, double cx, double cy, double rx, double ry, const Color& c,
                  double opacity = 1.0, double edge = 1.5) {
    const Shape& s = img.shape();
    int y0 = std::max(0, int(cy - ry - edge - 1)), y1 = std::min(s.h - 1, int(cy + ry + edge + 1));
    int x0 = std::max(0, int(cx - rx - edge - 1)), x1 = std::min(s.w - 1, int(cx + rx + edge + 1));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double dx = (x - cx) / rx, dy = (y - cy) / ry;
            double d = std::sqrt(dx * dx + dy * dy);  // 1.0 at the rim
            double px_per_unit = std::min(rx, ry);
            double a = smooth01((1.0 - d) * px_per_unit / edge + 0.5);
            blend_px(img, y, x, c, opacity * a);
        }
}

// Elliptical ring (for glasses frames).
void draw_ring(Tensor& img, double cx, double cy, double rx, double ry, double thick,
               const Color& c) {
    const Shape& s = img.shape();
    int y0 = std::max(0, int(cy - ry - thick - 2)), y1 = std::min(s.h - 1, int(cy + ry + thick + 2));
    int x0 = std::max(0, int(cx - rx - thick - 2)), x1 = std::min(s.w - 1, int(cx + rx + thick + 2));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double dx = (x - cx) / rx, dy = (y - cy) / ry;
            double d = std::sqrt(dx * dx + dy * dy);
            double px_per_unit = std::min(rx, ry);
            double dist_px = std::fabs(d - 1.0) * px_per_unit;
            double a = smooth01((thick - dist_px) / 1.2 + 0.5);
            blend_px(img, y, x, c, a);
        }
}

}  // namespace

Tensor generate_synthetic_face(std::uint64_t seed, int size, const FaceAttrs& attrs) {
    if (size < 16) throw ConfigError("synthetic face size must be >= 16");
    Rng rng(Rng::derive(seed, 0x5face));
    const double S = size;
    Tensor img(Shape{1, 3, size, size});

    // background: diagonal gradient between two muted colors
    Color bg0{rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7), rng.uniform(0.3, 0.8)};
    Color bg1{rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7), rng.uniform(0.3, 0.8)};
    double angle = rng.uniform(0.0, 1.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double t = (angle * x + (1.0 - angle) * y) / S;
            img.at(0, 0, y, x) = bg0.r + t * (bg1.r - bg0.r);
            img.at(0, 1, y, x) = bg0.g + t * (bg1.g - bg0.g);
            img.at(0, 2, y, x) = bg0.b + t * (bg1.b - bg0.b);
        }

    // head
    double base = rng.uniform(0.55, 0.85);
    Color skin{base, base * rng.uniform(0.72, 0.85), base * rng.uniform(0.55, 0.7)};
    double cx = S * rng.uniform(0.45, 0.55), cy = S * rng.uniform(0.48, 0.56);
    double rx = S * rng.uniform(0.26, 0.36), ry = S * rng.uniform(0.32, 0.42);
    draw_ellipse(img, cx, cy, rx, ry, skin);

    // hair: darker cap over the upper head
    if (attrs.hair) {
        Color hairc{base * rng.uniform(0.1, 0.4), base * rng.uniform(0.08, 0.3),
                    base * rng.uniform(0.05, 0.25)};
        double hcy = cy - ry * rng.uniform(0.55, 0.75);
        draw_ellipse(img, cx, hcy, rx * rng.uniform(0.95, 1.1), ry * rng.uniform(0.35, 0.5), hairc);
    }

    // eyes
    double eye_dx = rx * rng.uniform(0.38, 0.5);
    double eye_y = cy - ry * rng.uniform(0.1, 0.22);
    double eye_r = rx * rng.uniform(0.14, 0.2);
    Color sclera{0.93, 0.93, 0.9};
    Color iris{rng.uniform(0.1, 0.5), rng.uniform(0.15, 0.45), rng.uniform(0.2, 0.6)};
    for (int side : {-1, 1}) {
        double ex = cx + side * eye_dx;
        draw_ellipse(img, ex, eye_y, eye_r, eye_r * 0.65, sclera);
        draw_ellipse(img, ex, eye_y, eye_r * 0.45, eye_r * 0.45, iris);
        draw_ellipse(img, ex, eye_y, eye_r * 0.18, eye_r * 0.18, Color{0.05, 0.05, 0.05});
    }

    // nose hint
    draw_ellipse(img, cx, cy + ry * 0.12, rx * 0.08, ry * 0.16,
                 Color{skin.r * 0.85, skin.g * 0.8, skin.b * 0.8}, 0.7);

    // mouth
    Color lip{rng.uniform(0.5, 0.8), rng.uniform(0.15, 0.3), rng.uniform(0.2, 0.35)};
    draw_ellipse(img, cx, cy + ry * rng.uniform(0.45, 0.58), rx * rng.uniform(0.3, 0.45),
                 ry * rng.uniform(0.06, 0.1), lip);

    // glasses
    if (attrs.glasses) {
        Color frame{0.1, 0.1, 0.12};
        double gr = eye_r * rng.uniform(1.3, 1.55);
        for (int side : {-1, 1})
            draw_ring(img, cx + side * eye_dx, eye_y, gr, gr * 0.8, std::max(1.0, S / 64.0), frame);
        // bridge
        int by = int(eye_y);
        for (int x = int(cx - eye_dx + gr); x <= int(cx + eye_dx - gr); ++x)
            if (x >= 0 && x < size && by >= 0 && by < size) blend_px(img, by, x, frame, 0.9);
    }

    // keep values interior so later residuals and codecs have headroom
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = 0.03 + 0.94 * std::clamp(img[i], 0.0, 1.0);
    return img;
}

// ---- dataset ----

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split: " + s);
}

void DatasetConfig::validate() const {
    if (train_frac <= 0 || val_frac <= 0 || test_frac <= 0)
        throw ConfigError("split fractions must all be positive");
    if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    if (image_size < 16) throw ConfigError("image_size too small");
    if (source == Source::Synthetic && synthetic_count < 3)
        throw ConfigError("synthetic_count must be >= 3");
}

namespace {

Split assign_split(std::uint64_t seed, std::size_t index, const DatasetConfig& cfg) {
    Rng r(Rng::derive(seed, 0x511700 + index));
    double u = r.uniform();
    if (u < cfg.train_frac) return Split::Train;
    if (u < cfg.train_frac + cfg.val_frac) return Split::Val;
    return Split::Test;
}

bool decodable_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ".png" || e == ".jpg" || e == ".jpeg" || e == ".bmp";
}

}  // namespace

Dataset::Dataset(const DatasetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.source == DatasetConfig::Source::Synthetic) {
        items_.reserve(cfg_.synthetic_count);
        for (int i = 0; i < cfg_.synthetic_count; ++i) {
            Rng ar(Rng::derive(cfg_.seed, 0xa7714 + i));
            FaceAttrs attrs;
            attrs.glasses = ar.uniform() < 0.3;
            attrs.hair = ar.uniform() < 0.8;
            char nm[32];
            std::snprintf(nm, sizeof nm, "synthetic_%06d", i);
            items_.push_back(Item{nm,
                                  generate_synthetic_face(Rng::derive(cfg_.seed, 0xface0 + i),
                                                          cfg_.image_size, attrs),
                                  assign_split(cfg_.seed, i, cfg_)});
        }
        return;
    }
    // directory mode
    if (!fs::is_directory(cfg_.directory))
        throw IngestError("not a directory: " + cfg_.directory);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg_.directory))
        if (e.is_regular_file() && decodable_ext(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    std::vector<std::string> failures;
    for (std::size_t i = 0; i < files.size(); ++i) {
        try {
            Tensor img = center_crop_resize(load_image(files[i].string()), cfg_.image_size);
            items_.push_back(
                Item{files[i].filename().string(), std::move(img), assign_split(cfg_.seed, items_.size(), cfg_)});
        } catch (const IoError&) {
            failures.push_back(files[i].filename().string());
        }
    }
    if (items_.empty()) {
        std::string msg = "no decodable images in " + cfg_.directory;
        if (!failures.empty()) {
            msg += "; failed:";
            for (const auto& f : failures) msg += " " + f;
        }
        throw IngestError(msg);
    }
}

const Tensor& Dataset::image(std::size_t index) const {
    if (index >= items_.size()) throw RangeError("dataset index out of range");
    return items_[index].image;
}

const std::string& Dataset::name(std::size_t index) const {
    if (index >= items_.size()) throw RangeError("dataset index out of range");
    return items_[index].name;
}

Split Dataset::split_of(std::size_t index) const {
    if (index >= items_.size()) throw RangeError("dataset index out of range");
    return items_[index].split;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items_.size(); ++i)
        if (items_[i].split == s) out.push_back(i);
    return out;
}

std::vector<std::vector<std::size_t>> Dataset::batches(Split s, int batch_size,
                                                       std::uint64_t epoch_seed) const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<std::size_t> idx = indices(s);
    Rng rng(Rng::derive(epoch_seed, 0xba7c4));
    // Fisher-Yates with our own rng so the order is platform-stable
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t at = 0; at < idx.size(); at += batch_size) {
        std::size_t end = std::min(idx.size(), at + batch_size);
        out.emplace_back(idx.begin() + at, idx.begin() + end);
    }
    return out;
}

Tensor Dataset::gather(const std::vector<std::size_t>& idx) const {
    if (idx.empty()) throw DomainError("gather: empty index list");
    const Shape& s0 = image(idx[0]).shape();
    Tensor out(Shape{int(idx.size()), s0.c, s0.h, s0.w});
    std::size_t per = std::size_t(s0.c) * s0.h * s0.w;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Tensor& t = image(idx[i]);
        std::copy(t.data(), t.data() + per, out.data() + i * per);
    }
    return out;
}

void Dataset::export_split_manifest(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest: " + path);
    for (const auto& it : items_) f << it.name << "\t" << split_name(it.split) << "\n";
}

}  // namespace tagkit
