#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "tagkit/data_pipeline.hpp"
#include "tagkit/errors.hpp"
#include "tagkit/image_io.hpp"
#include "tagkit/rng.hpp"

using namespace tagkit;
namespace fs = std::filesystem;

TEST_CASE("synthetic faces are deterministic and in range") {
    Tensor a = generate_synthetic_face(42, 64, FaceAttrs{});
    Tensor b = generate_synthetic_face(42, 64, FaceAttrs{});
    CHECK(a.vec() == b.vec());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] >= 0.0);
        CHECK(a[i] <= 1.0);
    }
}

TEST_CASE("different seeds give visibly different faces") {
    Tensor a = generate_synthetic_face(1, 64, FaceAttrs{});
    Tensor b = generate_synthetic_face(2, 64, FaceAttrs{});
    double mad = 0;
    for (std::size_t i = 0; i < a.size(); ++i) mad += std::fabs(a[i] - b[i]);
    mad /= double(a.size());
    CHECK(mad > 0.01);
}

TEST_CASE("attrs change the rendering") {
    FaceAttrs plain{false, false}, glossy{true, true};
    Tensor a = generate_synthetic_face(7, 64, plain);
    Tensor b = generate_synthetic_face(7, 64, glossy);
    CHECK(a.vec() != b.vec());
}

TEST_CASE("synthetic dataset: split determinism, coverage, no overlap") {
    DatasetConfig cfg;
    cfg.synthetic_count = 60;
    cfg.image_size = 32;
    cfg.seed = 5;
    Dataset d1(cfg), d2(cfg);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < d1.size(); ++i) {
        CHECK(d1.split_of(i) == d2.split_of(i));
        seen.insert(i);
    }
    auto tr = d1.indices(Split::Train), va = d1.indices(Split::Val), te = d1.indices(Split::Test);
    CHECK(tr.size() + va.size() + te.size() == d1.size());
    std::set<std::size_t> all(tr.begin(), tr.end());
    all.insert(va.begin(), va.end());
    all.insert(te.begin(), te.end());
    CHECK(all == seen);
    CHECK(tr.size() > va.size());  // 0.8 vs 0.1 splits at n=60
}

TEST_CASE("batches: seeded permutation, every item once, short tail kept") {
    DatasetConfig cfg;
    cfg.synthetic_count = 20;
    cfg.image_size = 32;
    cfg.train_frac = 0.5;
    cfg.val_frac = 0.25;
    cfg.test_frac = 0.25;
    Dataset d(cfg);
    auto tr = d.indices(Split::Train);
    auto b1 = d.batches(Split::Train, 4, 99);
    auto b2 = d.batches(Split::Train, 4, 99);
    CHECK(b1 == b2);
    auto b3 = d.batches(Split::Train, 4, 100);
    if (tr.size() > 3) CHECK(b1 != b3);  // different epoch seed shuffles differently

    std::multiset<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& batch : b1) {
        CHECK(batch.size() >= 1);
        CHECK(batch.size() <= 4);
        for (auto i : batch) seen.insert(i);
        total += batch.size();
    }
    CHECK(total == tr.size());
    std::multiset<std::size_t> expect(tr.begin(), tr.end());
    CHECK(seen == expect);
    if (tr.size() % 4 != 0) CHECK(b1.back().size() == tr.size() % 4);
}

TEST_CASE("gather stacks into a batch tensor") {
    DatasetConfig cfg;
    cfg.synthetic_count = 6;
    cfg.image_size = 32;
    Dataset d(cfg);
    Tensor b = d.gather({0, 3, 5});
    CHECK(b.shape() == Shape{3, 3, 32, 32});
    CHECK(b.at(1, 0, 10, 10) == d.image(3).at(0, 0, 10, 10));
}

TEST_CASE("directory loader: filename order, geometry, bad dir errors") {
    fs::path dir = fs::temp_directory_path() / "tagkit_dp_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    // 100x80 non-square input must come out image_size^2
    Tensor wide(Shape{1, 3, 80, 100});
    Rng rng(3);
    for (std::size_t i = 0; i < wide.size(); ++i) wide[i] = rng.uniform();
    save_png((dir / "b.png").string(), wide);
    save_png((dir / "a.png").string(), generate_synthetic_face(1, 48, FaceAttrs{}));
    save_png((dir / "c.png").string(), generate_synthetic_face(2, 48, FaceAttrs{}));

    DatasetConfig cfg;
    cfg.source = DatasetConfig::Source::Directory;
    cfg.directory = dir.string();
    cfg.image_size = 40;
    Dataset d(cfg);
    REQUIRE(d.size() == 3);
    CHECK(d.name(0) == "a.png");
    CHECK(d.name(1) == "b.png");
    CHECK(d.name(2) == "c.png");
    for (std::size_t i = 0; i < 3; ++i) CHECK(d.image(i).shape() == Shape{1, 3, 40, 40});

    Dataset d2(cfg);
    for (std::size_t i = 0; i < 3; ++i) CHECK(d.split_of(i) == d2.split_of(i));

    DatasetConfig bad = cfg;
    bad.directory = (dir / "missing").string();
    CHECK_THROWS_AS(Dataset{bad}, IngestError);
    fs::remove_all(dir);
}

TEST_CASE("config validation") {
    DatasetConfig cfg;
    cfg.train_frac = 0.9;
    cfg.val_frac = 0.2;
    cfg.test_frac = 0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = DatasetConfig{};
    cfg.val_frac = 0.0;
    cfg.train_frac = 0.9;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
