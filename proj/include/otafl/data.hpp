#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace otafl::data {

// A labelled dataset with dense row-major features. The last feature of every
// row is a constant 1.0 bias term, appended at construction time; `dim`
// includes it.
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t dim = 0;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
};

struct Partition {
  std::vector<std::vector<std::size_t>> assignments;  // one index list per client
  std::size_t dropped = 0;  // remainder samples left out of every shard
};

// Reads an IDX image/label file pair (the MNIST container format). Pixels are
// scaled to [0, 1]. Throws std::runtime_error on missing files, bad magic
// numbers, truncated payloads, or mismatched image/label counts.
Dataset load_idx(const std::filesystem::path& image_file,
                 const std::filesystem::path& label_file);

// Gaussian class blobs: centers drawn uniformly inside [0.15, 0.85]^d under a
// minimum-separation constraint, samples at center + spread * N(0, I),
// clamped to [0, 1]. Labels cycle 0, 1, ..., classes-1, so classes are
// balanced up to one sample. Deterministic in `seed`.
Dataset synth_classify(std::size_t n, std::size_t d, int classes, double spread,
                       std::uint64_t seed);

// Clamps every feature into [0, 1]. Idempotent.
void normalize_features(Dataset& dataset);

// Shuffles sample indices and deals out floor(n / clients) per client; the
// remainder is dropped and reported. Throws if a client would receive no
// samples.
Partition partition_uniform(std::size_t sample_count, std::size_t clients,
                            std::uint64_t seed);

// Materializes the selected rows as a new dataset.
Dataset subset(const Dataset& dataset, std::span<const std::size_t> rows);

// Splits off the first `head` samples (train) from the rest (test).
std::pair<Dataset, Dataset> split_head(const Dataset& dataset, std::size_t head);

}  // namespace otafl::data
