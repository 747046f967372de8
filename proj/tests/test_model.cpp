#include <doctest.h>

#include <cmath>
#include <vector>

#include "tagkit/data_pipeline.hpp"
#include "tagkit/errors.hpp"
#include "tagkit/graph.hpp"
#include "tagkit/model.hpp"
#include "tagkit/rng.hpp"

using namespace tagkit;

namespace {

ModelConfig toy_config() {
    ModelConfig c;
    c.image_size = 16;
    c.n_bits = 4;
    c.base_channels = 4;
    c.unet_depth = 2;
    c.embed_level = EmbedLevel::Late;
    return c;
}

Bits random_bits(int n, Rng& rng) {
    Bits b(n);
    for (int i = 0; i < n; ++i) b[i] = std::uint8_t(rng.bit());
    return b;
}

}  // namespace

TEST_CASE("build is deterministic for a fixed seed") {
    ModelConfig c = toy_config();
    TaggerModel m1(c, 9), m2(c, 9), m3(c, 10);
    auto p1 = m1.params().all(), p2 = m2.params().all(), p3 = m3.params().all();
    REQUIRE(p1.size() == p2.size());
    bool identical = true, differs_from_other_seed = false;
    for (std::size_t i = 0; i < p1.size(); ++i) {
        identical = identical && (p1[i]->value.vec() == p2[i]->value.vec());
        differs_from_other_seed =
            differs_from_other_seed || (p1[i]->value.vec() != p3[i]->value.vec());
    }
    CHECK(identical);
    CHECK(differs_from_other_seed);
}

TEST_CASE("decoder output length follows the message spec") {
    ModelConfig c = toy_config();
    TaggerModel m(c, 1);
    Tensor img = generate_synthetic_face(3, 16, FaceAttrs{});
    CHECK(m.decode_soft(img).size() == 4);

    ModelConfig cr = toy_config();
    cr.repetition_factor = 3;
    TaggerModel mr(cr, 1);
    CHECK(mr.decode_soft(img).size() == 12);
}

TEST_CASE("parameter count matches a hand-computed layer-by-layer sum") {
    ModelConfig c;  // 64px, depth 4, base 32, 20 bits, late
    TaggerModel m(c, 0);
    const int B = 32, payload = 20;
    std::size_t expect = 0;
    // message projection: level size 64>>4 = 4, so a 4x4 plane
    expect += std::size_t(4 * 4) * payload + 4 * 4;
    // contracting convs 3->32->64->128->256
    int down_in[5] = {0, 3, 32, 64, 128};
    for (int i = 1; i <= 4; ++i) {
        int cout = B << (i - 1);
        expect += std::size_t(cout) * down_in[i] * 9 + cout;
    }
    // expanding convs: (bottleneck 256+1 late) resized + skip
    // i=4: in (257 + 128) -> 128; i=3: (128+64)->64; i=2: (64+32)->32; i=1: (32+3)->32
    expect += std::size_t(128) * (257 + 128) * 9 + 128;
    expect += std::size_t(64) * (128 + 64) * 9 + 64;
    expect += std::size_t(32) * (64 + 32) * 9 + 32;
    expect += std::size_t(32) * (32 + 3) * 9 + 32;
    // head 32->3
    expect += std::size_t(3) * 32 * 9 + 3;
    // decoder convs 3->32->64->128->256->256->256->256
    int dch[8] = {3, 32, 64, 128, 256, 256, 256, 256};
    for (int i = 1; i <= 7; ++i) expect += std::size_t(dch[i]) * dch[i - 1] * 9 + dch[i];
    // dense 256*4*4 -> 20
    expect += std::size_t(payload) * (256 * 4 * 4) + payload;
    CHECK(m.params().total_count() == expect);
}

TEST_CASE("encode keeps output in range and within the residual budget") {
    ModelConfig c = toy_config();
    TaggerModel m(c, 4);
    Rng rng(5);
    Tensor img = generate_synthetic_face(11, 16, FaceAttrs{});
    Bits bits = random_bits(4, rng);
    Tensor mask = default_mask(16, MaskKind::Uniform);
    Tensor out = m.encode_image(img, bits, mask);
    CHECK(out.shape() == img.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= 0.0);
        CHECK(out[i] <= 1.0);
        CHECK(std::fabs(out[i] - img[i]) <= c.residual_scale + 1e-12);
    }
    Tensor out2 = m.encode_image(img, bits, mask);
    CHECK(out.vec() == out2.vec());
}

TEST_CASE("decode_soft values live strictly inside (0,1)") {
    TaggerModel m(toy_config(), 6);
    Tensor img = generate_synthetic_face(17, 16, FaceAttrs{});
    for (double v : m.decode_soft(img)) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("untrained decoder carries no message: accuracy near 0.5") {
    TaggerModel m(toy_config(), 123);
    MessageSpec spec = m.message_spec();
    Rng rng(321);
    double acc = 0;
    int trials = 0;
    for (int i = 0; i < 50; ++i) {
        Tensor img = generate_synthetic_face(1000 + i, 16, FaceAttrs{});
        Bits decoded = TaggerModel::hard_decision(m.decode_soft(img), spec);
        for (int t = 0; t < 20; ++t) {
            acc += bit_accuracy(decoded, random_bits(4, rng));
            ++trials;
        }
    }
    acc /= trials;
    CHECK(acc == doctest::Approx(0.5).epsilon(0.1));
    CHECK(std::fabs(acc - 0.5) < 0.05);
}

TEST_CASE("hard_decision thresholding and repetition") {
    MessageSpec s2{2, 1};
    CHECK(TaggerModel::hard_decision({0.9, 0.1}, s2) == Bits{1, 0});
    MessageSpec s1{1, 1};
    CHECK(TaggerModel::hard_decision({0.5}, s1) == Bits{1});  // tie goes to 1

    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> soft(6);
        for (auto& v : soft) v = rng.uniform();
        Bits got = TaggerModel::hard_decision(soft, MessageSpec{6, 1});
        for (int i = 0; i < 6; ++i) CHECK(got[i] == (soft[i] >= 0.5 ? 1 : 0));
    }

    // with repetition the majority of thresholded repeats wins
    MessageSpec rep{2, 3};
    CHECK(TaggerModel::hard_decision({0.9, 0.8, 0.1, 0.2, 0.6, 0.4}, rep) == Bits{1, 0});
}

TEST_CASE("default masks: uniform ones; border ramp endpoints and midpoint") {
    Tensor u = default_mask(64, MaskKind::Uniform);
    for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == 1.0);

    Tensor b = default_mask(64, MaskKind::BorderWeighted);
    double center = b.at(0, 0, 31, 31);  // nearest grid point to the exact center
    CHECK(center == doctest::Approx(0.5).epsilon(0.02));
    CHECK(b.at(0, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(b.at(0, 0, 63, 63) == doctest::Approx(1.0));
    // half way from center to corner along the diagonal
    double mid = b.at(0, 0, 15, 15);
    CHECK(mid == doctest::Approx(0.75).epsilon(0.03));
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(b[i] >= 0.5);
        CHECK(b[i] <= 1.0);
    }
}

TEST_CASE("embed levels share output shapes but differ in parameters") {
    Tensor img = generate_synthetic_face(2, 16, FaceAttrs{});
    Rng rng(12);
    Bits bits = random_bits(4, rng);
    Tensor mask = default_mask(16, MaskKind::Uniform);
    std::vector<Tensor> outs;
    for (EmbedLevel lvl : {EmbedLevel::Raw, EmbedLevel::Early, EmbedLevel::Late}) {
        ModelConfig c = toy_config();
        c.embed_level = lvl;
        TaggerModel m(c, 77);
        Tensor out = m.encode_image(img, bits, mask);
        CHECK(out.shape() == img.shape());
        outs.push_back(out);
    }
    // the injection point genuinely changes the computation
    CHECK(outs[0].vec() != outs[2].vec());
}

TEST_CASE("round-trip message gradient matches finite differences (toy config)") {
    ModelConfig c = toy_config();
    TaggerModel m(c, 99);
    Tensor img = generate_synthetic_face(5, 16, FaceAttrs{});
    Rng rng(6);
    Bits bits = random_bits(4, rng);
    Tensor bt = TaggerModel::bits_batch_tensor({bits});
    Tensor truth(Shape{1, 4, 1, 1});
    for (int i = 0; i < 4; ++i) truth[i] = double(bits[i]);

    auto loss_value = [&]() {
        Graph g;
        Var enc = m.encode(g, g.constant(img), bt);
        Var soft = m.decode(g, enc);
        return g.val(g.bce_mean(soft, truth, 1e-7))[0];
    };

    // analytic gradients
    m.params().zero_grads();
    {
        Graph g;
        Var enc = m.encode(g, g.constant(img), bt);
        Var soft = m.decode(g, enc);
        g.backward(g.bce_mean(soft, truth, 1e-7));
    }

    // probe a spread of parameter entries against central differences
    Rng pick(31);
    double max_rel = 0;
    int checked = 0;
    auto all = m.params().all();
    for (auto* p : all) {
        // the message projection is a fixed code with no gradient path
        if (p->name.rfind("enc.msg", 0) == 0) continue;
        for (int probe = 0; probe < 3; ++probe) {
            std::size_t i = pick.uniform_int(p->value.size());
            double orig = p->value[i];
            double h = 1e-5;
            p->value[i] = orig + h;
            double fp = loss_value();
            p->value[i] = orig - h;
            double fm = loss_value();
            p->value[i] = orig;
            double fd = (fp - fm) / (2 * h);
            double an = p->grad[i];
            double rel = std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
            max_rel = std::max(max_rel, rel);
            ++checked;
        }
    }
    CHECK(checked >= 60);
    CHECK(max_rel < 1e-3);
}

TEST_CASE("config validation rejects bad geometry") {
    ModelConfig c;
    c.image_size = 40;  // not divisible by 16
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.image_size = 64;
    c.unet_depth = 5;  // 64 % 32 == 0 is fine; 16 would not be
    CHECK_NOTHROW(c.validate());
    c.image_size = 16;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig{};
    c.residual_scale = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("mismatched bits are rejected with a shape error") {
    TaggerModel m(toy_config(), 3);
    Tensor img = generate_synthetic_face(9, 16, FaceAttrs{});
    CHECK_THROWS_AS(m.encode_image(img, Bits{1, 0}, default_mask(16, MaskKind::Uniform)),
                    ShapeError);
    CHECK_THROWS_AS(m.decode_soft(generate_synthetic_face(9, 32, FaceAttrs{})), ShapeError);
}
