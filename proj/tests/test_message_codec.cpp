#include <doctest.h>

#include <cstdint>

#include "tagkit/errors.hpp"
#include "tagkit/message_codec.hpp"
#include "tagkit/rng.hpp"

using namespace tagkit;

TEST_CASE("uid_to_bits basics") {
    MessageSpec s8{8, 1};
    CHECK(uid_to_bits(0, s8) == Bits{0, 0, 0, 0, 0, 0, 0, 0});
    MessageSpec s4{4, 1};
    CHECK(uid_to_bits(5, s4) == Bits{0, 1, 0, 1});
    MessageSpec s30{30, 1};
    Bits ones = uid_to_bits((std::uint64_t(1) << 30) - 1, s30);
    CHECK(ones.size() == 30);
    for (auto b : ones) CHECK(b == 1);
}

TEST_CASE("uid range errors name the maximum") {
    MessageSpec s4{4, 1};
    CHECK_THROWS_WITH_AS(uid_to_bits(16, s4), doctest::Contains("15"), RangeError);
}

TEST_CASE("bits_to_uid inverse cases") {
    CHECK(bits_to_uid(Bits{0, 1, 0, 1}) == 5);
    CHECK(bits_to_uid(Bits{0, 0, 0, 0, 0, 0}) == 0);
}

TEST_CASE("round trip identity, exhaustive for 12 bits") {
    MessageSpec s{12, 1};
    for (std::uint64_t uid = 0; uid < (1u << 12); ++uid)
        CHECK(bits_to_uid(uid_to_bits(uid, s)) == uid);
}

TEST_CASE("repetition code basics") {
    MessageSpec s{2, 3};
    CHECK(repetition_encode(Bits{1, 0}, s) == Bits{1, 1, 1, 0, 0, 0});
    MessageSpec s1{5, 1};
    Bits b{1, 0, 1, 1, 0};
    CHECK(repetition_encode(b, s1) == b);
    CHECK(repetition_decode(b, s1) == b);
    CHECK(repetition_decode(Bits{1, 1, 0, 0, 0, 1}, s) == Bits{1, 0});
}

TEST_CASE("even repetition factor rejected") {
    MessageSpec s{4, 2};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(repetition_encode(Bits{1, 0, 1, 0}, s), ConfigError);
}

TEST_CASE("k=3 survives any single flip per group (exhaustive)") {
    MessageSpec s{4, 3};
    for (unsigned m = 0; m < 16; ++m) {
        Bits b = uid_to_bits(m, MessageSpec{4, 1});
        Bits enc = repetition_encode(b, s);
        // flip one repeat inside each group, all 3^4 combinations of positions
        for (int f0 = 0; f0 < 3; ++f0)
            for (int f1 = 0; f1 < 3; ++f1)
                for (int f2 = 0; f2 < 3; ++f2)
                    for (int f3 = 0; f3 < 3; ++f3) {
                        Bits p = enc;
                        int fl[4] = {f0, f1, f2, f3};
                        for (int gidx = 0; gidx < 4; ++gidx) p[gidx * 3 + fl[gidx]] ^= 1;
                        CHECK(repetition_decode(p, s) == b);
                    }
    }
}

TEST_CASE("k=5 survives up to 2 flips per group (exhaustive positions)") {
    MessageSpec s{2, 5};
    for (unsigned m = 0; m < 4; ++m) {
        Bits b = uid_to_bits(m, MessageSpec{2, 1});
        Bits enc = repetition_encode(b, s);
        for (int a1 = 0; a1 < 5; ++a1)
            for (int a2 = a1 + 1; a2 < 5; ++a2)
                for (int b1 = 0; b1 < 5; ++b1)
                    for (int b2 = b1 + 1; b2 < 5; ++b2) {
                        Bits p = enc;
                        p[a1] ^= 1;
                        p[a2] ^= 1;
                        p[5 + b1] ^= 1;
                        p[5 + b2] ^= 1;
                        CHECK(repetition_decode(p, s) == b);
                    }
    }
}

TEST_CASE("bit_accuracy basics and counting oracle") {
    Bits a{1, 0, 1, 0};
    CHECK(bit_accuracy(a, a) == 1.0);
    Bits b = a;
    b[2] ^= 1;
    CHECK(bit_accuracy(a, b) == doctest::Approx(0.75));

    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        Bits x(10), y(10);
        for (int i = 0; i < 10; ++i) {
            x[i] = std::uint8_t(rng.bit());
            y[i] = std::uint8_t(rng.bit());
        }
        int cnt = 0;
        for (int i = 0; i < 10; ++i) cnt += (x[i] == y[i]);
        CHECK(bit_accuracy(x, y) == doctest::Approx(cnt / 10.0));
    }
    CHECK_THROWS_AS(bit_accuracy(Bits{1, 0}, Bits{1}), ShapeError);
}

TEST_CASE("fmrr basics") {
    std::vector<Bits> t{{1, 0, 1}, {0, 0, 1}};
    CHECK(fmrr(t, t) == 1.0);
    std::vector<Bits> d = t;
    d[1][0] ^= 1;
    CHECK(fmrr(d, t) == doctest::Approx(0.5));
    CHECK_THROWS_AS(fmrr({}, {}), DomainError);
}

TEST_CASE("fmrr matches analytic value under iid flips") {
    // p=0.05 per bit, n=20 bits, 10k items: expect (1-p)^20 = 0.3585 +- 0.02
    Rng rng(20260823);
    const int n = 20, batch = 10000;
    std::vector<Bits> truth(batch), dec(batch);
    for (int i = 0; i < batch; ++i) {
        truth[i].resize(n);
        for (int j = 0; j < n; ++j) truth[i][j] = std::uint8_t(rng.bit());
        dec[i] = truth[i];
        for (int j = 0; j < n; ++j)
            if (rng.uniform() < 0.05) dec[i][j] ^= 1;
    }
    double expect = std::pow(0.95, 20);
    CHECK(fmrr(dec, truth) == doctest::Approx(expect).epsilon(0.06));
    CHECK(std::fabs(fmrr(dec, truth) - expect) < 0.02);
}

TEST_CASE("fmrr never exceeds mean bit accuracy") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Bits> t(8), d(8);
        for (int i = 0; i < 8; ++i) {
            t[i].resize(6);
            d[i].resize(6);
            for (int j = 0; j < 6; ++j) {
                t[i][j] = std::uint8_t(rng.bit());
                d[i][j] = std::uint8_t(rng.bit());
            }
        }
        double mean_acc = 0;
        for (int i = 0; i < 8; ++i) mean_acc += bit_accuracy(d[i], t[i]);
        mean_acc /= 8;
        CHECK(fmrr(d, t) <= mean_acc + 1e-12);
    }
}

TEST_CASE("string round trip") {
    Bits b{1, 0, 1, 1, 0};
    CHECK(bits_to_string(b) == "10110");
    CHECK(string_to_bits("10110") == b);
    CHECK_THROWS_AS(string_to_bits("10x"), RangeError);
}
