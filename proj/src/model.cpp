#include "tagkit/model.hpp"

#include <cmath>

#include "tagkit/errors.hpp"
#include "tagkit/rng.hpp"

namespace tagkit {

const char* embed_level_name(EmbedLevel l) {
    switch (l) {
        case EmbedLevel::Raw: return "raw";
        case EmbedLevel::Early: return "early";
        case EmbedLevel::Late: return "late";
    }
    return "?";
}

EmbedLevel embed_level_from_name(const std::string& s) {
    if (s == "raw") return EmbedLevel::Raw;
    if (s == "early") return EmbedLevel::Early;
    if (s == "late") return EmbedLevel::Late;
    throw ConfigError("unknown embed level: " + s);
}

void ModelConfig::validate() const {
    MessageSpec{n_bits, repetition_factor}.validate();
    if (image_size < 16) throw ConfigError("image_size must be >= 16");
    if (unet_depth < 1 || unet_depth > 5) throw ConfigError("unet_depth must be in [1,5]");
    if (image_size % (1 << unet_depth) != 0)
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " not divisible by 2^unet_depth = " + std::to_string(1 << unet_depth));
    if (image_size % 16 != 0)
        throw ConfigError("image_size must be divisible by 16 (decoder stride stack)");
    if (base_channels < 2) throw ConfigError("base_channels must be >= 2");
    if (!(residual_scale > 0.0 && residual_scale <= 1.0))
        throw ConfigError("residual_scale must be in (0,1]");
}

Tensor default_mask(int image_size, MaskKind kind) {
    if (image_size < 1) throw ConfigError("mask size must be positive");
    Tensor m(Shape{1, 1, image_size, image_size});
    if (kind == MaskKind::Uniform) {
        m.fill(1.0);
        return m;
    }
    double cx = (image_size - 1) / 2.0, cy = (image_size - 1) / 2.0;
    double r_corner = std::hypot(cx, cy);
    for (int y = 0; y < image_size; ++y)
        for (int x = 0; x < image_size; ++x) {
            double r = std::hypot(x - cx, y - cy);
            m.at(0, 0, y, x) = 0.5 + 0.5 * std::min(r / r_corner, 1.0);
        }
    return m;
}

// ---- construction ----

namespace {

Tensor he_conv(Rng& rng, int cout, int cin, int k, double scale = 1.0) {
    Tensor w(Shape{cout, cin, k, k});
    double std = scale * std::sqrt(2.0 / double(cin * k * k));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return w;
}

Tensor he_dense(Rng& rng, int fout, int fin, double scale = 1.0) {
    Tensor w(Shape{fout, fin, 1, 1});
    double std = scale * std::sqrt(2.0 / double(fin));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std);
    return w;
}

// Per-bit spatial patterns for the message plane: random draws, then the
// columns are orthonormalized (Gram-Schmidt) while they fit the plane
// dimension and normalized beyond it. A raw Gaussian code is occasionally
// near-singular and makes the whole write/read loop untrainable for that
// seed; orthonormal columns give every bit the same clean footprint.
Tensor code_matrix(Rng& rng, int fout, int fin) {
    Tensor w(Shape{fout, fin, 1, 1});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 1.0);
    for (int i = 0; i < fin; ++i) {
        if (i < fout) {
            for (int j = 0; j < i; ++j) {
                double dot = 0;
                for (int f = 0; f < fout; ++f)
                    dot += w[std::size_t(f) * fin + i] * w[std::size_t(f) * fin + j];
                for (int f = 0; f < fout; ++f)
                    w[std::size_t(f) * fin + i] -= dot * w[std::size_t(f) * fin + j];
            }
        }
        double nrm = 0;
        for (int f = 0; f < fout; ++f)
            nrm += w[std::size_t(f) * fin + i] * w[std::size_t(f) * fin + i];
        nrm = std::sqrt(std::max(nrm, 1e-12));
        for (int f = 0; f < fout; ++f) w[std::size_t(f) * fin + i] /= nrm;
    }
    return w;
}

// channel width of contracting level i (1-based)
int level_ch(const ModelConfig& c, int i) { return c.base_channels << (i - 1); }

}  // namespace

TaggerModel::TaggerModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int B = cfg_.base_channels, d = cfg_.unet_depth;
    int layer = 0;
    auto r = [&]() { return Rng(Rng::derive(seed, 0x40de1 + layer++)); };

    // message projection: payload bits -> pb*pb plane at the injection level.
    // Lives in the parameter set (and so in checkpoints) but is read through
    // frozen() in the forward pass — a fixed code, never optimized.
    int level_size = cfg_.image_size;
    if (cfg_.embed_level == EmbedLevel::Early) level_size = cfg_.image_size / 2;
    if (cfg_.embed_level == EmbedLevel::Late) level_size = cfg_.image_size >> d;
    int pb = std::min(8, level_size);
    {
        Rng rng = r();
        params_.create("enc.msg.w", code_matrix(rng, pb * pb, cfg_.payload_bits()));
        params_.create("enc.msg.b", Tensor::zeros(Shape{1, pb * pb, 1, 1}));
    }

    // contracting path
    for (int i = 1; i <= d; ++i) {
        int cin = (i == 1) ? 3 + (cfg_.embed_level == EmbedLevel::Raw ? 1 : 0)
                           : level_ch(cfg_, i - 1) + (i == 2 && cfg_.embed_level == EmbedLevel::Early ? 1 : 0);
        int cout = level_ch(cfg_, i);
        Rng rng = r();
        params_.create("enc.down" + std::to_string(i) + ".w", he_conv(rng, cout, cin, 3));
        params_.create("enc.down" + std::to_string(i) + ".b", Tensor::zeros(Shape{1, cout, 1, 1}));
    }

    // expanding path: level i -> i-1, skip-concat with the contracting output
    for (int i = d; i >= 1; --i) {
        int u_ch = (i == d) ? level_ch(cfg_, d) + (cfg_.embed_level == EmbedLevel::Late ? 1 : 0)
                            : level_ch(cfg_, i);
        int skip_ch = (i == 1) ? 3 + (cfg_.embed_level == EmbedLevel::Raw ? 1 : 0)
                               : level_ch(cfg_, i - 1) +
                                     (i == 2 && cfg_.embed_level == EmbedLevel::Early ? 1 : 0);
        int cout = (i == 1) ? B : level_ch(cfg_, i - 1);
        Rng rng = r();
        params_.create("enc.up" + std::to_string(i) + ".w", he_conv(rng, cout, u_ch + skip_ch, 3));
        params_.create("enc.up" + std::to_string(i) + ".b", Tensor::zeros(Shape{1, cout, 1, 1}));
    }

    // full-strength head: a fresh model writes a visible (still α-bounded)
    // residual, which gives the decoder a signal to latch onto during
    // warm-up; the ramped fidelity losses squeeze it down later
    {
        Rng rng = r();
        params_.create("enc.head.w", he_conv(rng, 3, B, 3));
        params_.create("enc.head.b", Tensor::zeros(Shape{1, 3, 1, 1}));
    }

    // decoder: 7 convs, strides 2,2,2,2,1,1,1, then dense + sigmoid
    const int dch[8] = {3, B, 2 * B, 4 * B, 8 * B, 8 * B, 8 * B, 8 * B};
    for (int i = 1; i <= 7; ++i) {
        Rng rng = r();
        params_.create("dec.conv" + std::to_string(i) + ".w", he_conv(rng, dch[i], dch[i - 1], 3));
        params_.create("dec.conv" + std::to_string(i) + ".b", Tensor::zeros(Shape{1, dch[i], 1, 1}));
    }
    {
        int fin = 8 * B * (cfg_.image_size / 16) * (cfg_.image_size / 16);
        Rng rng = r();
        // small logits at init: soft bits start near 0.5 (carries no message)
        params_.create("dec.fc.w", he_dense(rng, cfg_.payload_bits(), fin, 0.01));
        params_.create("dec.fc.b", Tensor::zeros(Shape{1, cfg_.payload_bits(), 1, 1}));
    }
}

// ---- forward graphs ----

Var TaggerModel::message_plane(Graph& g, const Tensor& bits, int level_size) const {
    const Shape& bs = bits.shape();
    if (bs.c != cfg_.payload_bits() || bs.h != 1 || bs.w != 1)
        throw ShapeError("message bits tensor must be (N," + std::to_string(cfg_.payload_bits()) +
                         ",1,1), got " + bs.str());
    int pb = std::min(8, level_size);
    // center to ±1 so each bit flips the sign of its pattern instead of
    // gating it on and off around a DC pedestal
    Var b = g.add_scalar(g.mul_scalar(g.constant(bits), 2.0), -1.0);
    // The projection is a fixed code: referencing it as frozen keeps it out
    // of every optimizer update, so the spatial bit pattern stays stationary
    // while the conv stacks learn to transcribe and read it. (A projection
    // that trains alongside them keeps moving the code and the write/read
    // loop never locks on.)
    Var proj = g.dense(b, g.frozen(params_.get("enc.msg.w")),
                       g.frozen(params_.get("enc.msg.b")));
    Var plane = g.reshape(proj, Shape{bs.n, 1, pb, pb});
    if (level_size != pb) plane = g.tile_spatial(plane, level_size, level_size);
    return plane;
}

Var TaggerModel::encode(Graph& g, Var image, const Tensor& bits) const {
    const Shape& is = g.val(image).shape();
    if (is.c != 3 || is.h != cfg_.image_size || is.w != cfg_.image_size)
        throw ShapeError("encode expects (N,3," + std::to_string(cfg_.image_size) + "," +
                         std::to_string(cfg_.image_size) + "), got " + is.str());
    ParamSet& ps = const_cast<ParamSet&>(params_);
    auto P = [&](const std::string& n) { return g.param(ps.get(n)); };
    const int d = cfg_.unet_depth;

    std::vector<Var> skips;  // per level 0..d, post message-injection
    Var h = image;
    if (cfg_.embed_level == EmbedLevel::Raw)
        h = g.concat_c({h, message_plane(g, bits, cfg_.image_size)});
    skips.push_back(h);
    for (int i = 1; i <= d; ++i) {
        h = g.elu(g.conv2d(h, P("enc.down" + std::to_string(i) + ".w"),
                           P("enc.down" + std::to_string(i) + ".b"), 2, 1));
        if (i == 1 && cfg_.embed_level == EmbedLevel::Early)
            h = g.concat_c({h, message_plane(g, bits, cfg_.image_size / 2)});
        skips.push_back(h);
    }
    if (cfg_.embed_level == EmbedLevel::Late)
        h = g.concat_c({h, message_plane(g, bits, cfg_.image_size >> d)});

    for (int i = d; i >= 1; --i) {
        int out_size = cfg_.image_size >> (i - 1);
        Var up = g.resize_bilinear(h, out_size, out_size);
        Var cat = g.concat_c({up, skips[std::size_t(i) - 1]});
        h = g.elu(g.conv2d(cat, P("enc.up" + std::to_string(i) + ".w"),
                           P("enc.up" + std::to_string(i) + ".b"), 1, 1));
    }
    Var raw = g.conv2d(h, P("enc.head.w"), P("enc.head.b"), 1, 1);
    Var residual = g.mul_scalar(g.tanh(raw), cfg_.residual_scale);
    return g.clamp01(g.add(image, residual));
}

Var TaggerModel::decode(Graph& g, Var image) const {
    const Shape& is = g.val(image).shape();
    if (is.c != 3 || is.h != cfg_.image_size || is.w != cfg_.image_size)
        throw ShapeError("decode expects (N,3," + std::to_string(cfg_.image_size) + "," +
                         std::to_string(cfg_.image_size) + "), got " + is.str());
    ParamSet& ps = const_cast<ParamSet&>(params_);
    auto P = [&](const std::string& n) { return g.param(ps.get(n)); };
    Var h = image;
    for (int i = 1; i <= 7; ++i) {
        int stride = i <= 4 ? 2 : 1;
        h = g.elu(g.conv2d(h, P("dec.conv" + std::to_string(i) + ".w"),
                           P("dec.conv" + std::to_string(i) + ".b"), stride, 1));
    }
    Var logits = g.dense(h, P("dec.fc.w"), P("dec.fc.b"));
    return g.sigmoid(logits);
}

// ---- eager wrappers ----

namespace {

void check_finite(const Tensor& t, const char* where) {
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i]))
            throw NumericError(std::string("non-finite activation in ") + where);
}

}  // namespace

Tensor TaggerModel::encode_image(const Tensor& image, const Bits& bits, const Tensor& mask) const {
    if (int(bits.size()) != cfg_.n_bits)
        throw ShapeError("expected " + std::to_string(cfg_.n_bits) + " message bits, got " +
                         std::to_string(bits.size()));
    const Shape& ms = mask.shape();
    if (ms.h != cfg_.image_size || ms.w != cfg_.image_size)
        throw ShapeError("mask size " + ms.str() + " does not match the model");
    Bits payload = repetition_encode(bits, message_spec());
    Graph g;
    Var out = encode(g, g.constant(image), bits_batch_tensor({payload}));
    check_finite(g.val(out), "encoder output");
    return g.val(out);
}

std::vector<double> TaggerModel::decode_soft(const Tensor& image) const {
    Graph g;
    Var out = decode(g, g.constant(image));
    check_finite(g.val(out), "decoder output");
    const Tensor& t = g.val(out);
    return std::vector<double>(t.data(), t.data() + t.size());
}

Bits TaggerModel::hard_decision(const std::vector<double>& soft, const MessageSpec& spec) {
    spec.validate();
    if (int(soft.size()) != spec.payload_bits())
        throw ShapeError("hard_decision: expected " + std::to_string(spec.payload_bits()) +
                         " soft bits, got " + std::to_string(soft.size()));
    Bits payload(soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) payload[i] = std::uint8_t(soft[i] >= 0.5);
    if (spec.repetition_factor == 1) return payload;
    return repetition_decode(payload, spec);
}

Tensor TaggerModel::bits_batch_tensor(const std::vector<Bits>& batch) {
    if (batch.empty()) throw DomainError("empty bits batch");
    int n = int(batch.size()), pb = int(batch[0].size());
    Tensor t(Shape{n, pb, 1, 1});
    for (int i = 0; i < n; ++i) {
        if (int(batch[i].size()) != pb) throw ShapeError("ragged bits batch");
        for (int j = 0; j < pb; ++j) t[std::size_t(i) * pb + j] = double(batch[i][j]);
    }
    return t;
}

}  // namespace tagkit
