#ifndef TAGKIT_DATA_PIPELINE_HPP
#define TAGKIT_DATA_PIPELINE_HPP

// Deterministic image sourcing: a procedural face-like generator for
// self-contained runs, plus ingestion of a user-supplied image directory.

#include <cstdint>
#include <string>
#include <vector>

#include "tagkit/tensor.hpp"

namespace tagkit {

struct FaceAttrs {
    bool glasses = false;
    bool hair = true;
};

// Deterministic per (seed, size, attrs); values in [0,1].
Tensor generate_synthetic_face(std::uint64_t seed, int size, const FaceAttrs& attrs);

enum class Split { Train, Val, Test };
const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct DatasetConfig {
    enum class Source { Synthetic, Directory };
    Source source = Source::Synthetic;
    std::string directory;    // Source::Directory only
    int image_size = 64;
    int synthetic_count = 512;  // Source::Synthetic only
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
};

class Dataset {
public:
    explicit Dataset(const DatasetConfig& cfg);

    std::size_t size() const { return items_.size(); }
    const Tensor& image(std::size_t index) const;
    const std::string& name(std::size_t index) const;
    Split split_of(std::size_t index) const;
    std::vector<std::size_t> indices(Split s) const;

    // Seeded permutation per epoch, chunked; the final short batch is kept.
    std::vector<std::vector<std::size_t>> batches(Split s, int batch_size,
                                                  std::uint64_t epoch_seed) const;

    // Stacks the given items into an (N,3,S,S) batch.
    Tensor gather(const std::vector<std::size_t>& idx) const;

    void export_split_manifest(const std::string& path) const;

    int image_size() const { return cfg_.image_size; }

private:
    struct Item {
        std::string name;
        Tensor image;
        Split split;
    };
    DatasetConfig cfg_;
    std::vector<Item> items_;
};

}  // namespace tagkit

#endif
