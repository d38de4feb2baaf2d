#include "otafl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "otafl/rng.hpp"
#include "otafl/vec.hpp"

namespace otafl::data {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::uint32_t read_be32(std::ifstream& in, const std::filesystem::path& file) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw std::runtime_error("truncated header in " + file.string());
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_binary(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw std::runtime_error("unable to open " + file.string());
  }
  return in;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& image_file,
                 const std::filesystem::path& label_file) {
  std::ifstream images = open_binary(image_file);
  const std::uint32_t image_magic = read_be32(images, image_file);
  if (image_magic != kImageMagic) {
    throw std::runtime_error("bad magic number " + std::to_string(image_magic) +
                             " in " + image_file.string() + ", expected " +
                             std::to_string(kImageMagic));
  }
  const std::uint32_t image_count = read_be32(images, image_file);
  const std::uint32_t rows = read_be32(images, image_file);
  const std::uint32_t cols = read_be32(images, image_file);

  std::ifstream labels = open_binary(label_file);
  const std::uint32_t label_magic = read_be32(labels, label_file);
  if (label_magic != kLabelMagic) {
    throw std::runtime_error("bad magic number " + std::to_string(label_magic) +
                             " in " + label_file.string() + ", expected " +
                             std::to_string(kLabelMagic));
  }
  const std::uint32_t label_count = read_be32(labels, label_file);
  if (label_count != image_count) {
    throw std::runtime_error("image/label count mismatch: " +
                             std::to_string(image_count) + " images vs " +
                             std::to_string(label_count) + " labels");
  }

  const std::size_t pixels = std::size_t(rows) * cols;
  Dataset out;
  out.dim = pixels + 1;  // + bias
  out.num_classes = 10;
  out.features.resize(std::size_t(image_count) * out.dim);
  out.labels.resize(image_count);

  std::vector<unsigned char> buf(pixels);
  for (std::uint32_t i = 0; i < image_count; ++i) {
    if (!images.read(reinterpret_cast<char*>(buf.data()),
                     static_cast<std::streamsize>(pixels))) {
      throw std::runtime_error("truncated image payload in " +
                               image_file.string());
    }
    double* row = out.features.data() + std::size_t(i) * out.dim;
    for (std::size_t j = 0; j < pixels; ++j) {
      row[j] = buf[j] / 255.0;
    }
    row[pixels] = 1.0;
  }

  for (std::uint32_t i = 0; i < image_count; ++i) {
    char c;
    if (!labels.read(&c, 1)) {
      throw std::runtime_error("truncated label payload in " +
                               label_file.string());
    }
    const int label = static_cast<unsigned char>(c);
    if (label < 0 || label > 9) {
      throw std::runtime_error("label " + std::to_string(label) +
                               " out of range in " + label_file.string());
    }
    out.labels[i] = label;
  }
  return out;
}

Dataset synth_classify(std::size_t n, std::size_t d, int classes, double spread,
                       std::uint64_t seed) {
  if (n == 0 || d == 0 || classes < 2) {
    throw std::invalid_argument("synth_classify: need n > 0, d > 0, classes >= 2");
  }
  RngStream rng(mix64(seed ^ fnv1a64("synth-classify")));

  // Draw centers in [0.15, 0.85]^d, rejecting candidates that land too close
  // to an existing center. The separation requirement is relaxed every 100
  // failed attempts so the draw terminates for any d / classes combination.
  std::vector<std::vector<double>> centers;
  double min_sep = 0.5;
  int failures = 0;
  while (centers.size() < static_cast<std::size_t>(classes)) {
    std::vector<double> c(d);
    for (auto& v : c) v = 0.15 + 0.7 * rng.next_unit();
    bool ok = true;
    for (const auto& other : centers) {
      if (vec::distance_squared(c, other) < min_sep * min_sep) {
        ok = false;
        break;
      }
    }
    if (ok) {
      centers.push_back(std::move(c));
      failures = 0;
    } else if (++failures >= 100) {
      min_sep *= 0.5;
      failures = 0;
    }
  }

  Dataset out;
  out.dim = d + 1;
  out.num_classes = classes;
  out.features.resize(n * out.dim);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    out.labels[i] = c;
    double* row = out.features.data() + i * out.dim;
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = centers[c][j] + spread * rng.next_normal();
    }
    row[d] = 1.0;
  }
  normalize_features(out);
  return out;
}

void normalize_features(Dataset& dataset) {
  for (auto& v : dataset.features) {
    v = std::clamp(v, 0.0, 1.0);
  }
}

Partition partition_uniform(std::size_t sample_count, std::size_t clients,
                            std::uint64_t seed) {
  if (clients == 0) {
    throw std::invalid_argument("partition_uniform: need at least one client");
  }
  const std::size_t per = sample_count / clients;
  if (per == 0) {
    throw std::invalid_argument(
        "partition_uniform: " + std::to_string(clients) + " clients but only " +
        std::to_string(sample_count) + " samples");
  }

  std::vector<std::size_t> perm(sample_count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RngStream rng(mix64(seed ^ fnv1a64("partition-uniform")));
  for (std::size_t i = sample_count - 1; i > 0; --i) {
    const std::size_t j = rng.next_below(i + 1);
    std::swap(perm[i], perm[j]);
  }

  Partition out;
  out.assignments.resize(clients);
  for (std::size_t k = 0; k < clients; ++k) {
    out.assignments[k].assign(perm.begin() + k * per, perm.begin() + (k + 1) * per);
  }
  out.dropped = sample_count - per * clients;
  return out;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> rows) {
  Dataset out;
  out.dim = dataset.dim;
  out.num_classes = dataset.num_classes;
  out.features.resize(rows.size() * dataset.dim);
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = dataset.row(rows[i]);
    std::copy(src.begin(), src.end(), out.features.begin() + i * dataset.dim);
    out.labels[i] = dataset.labels[rows[i]];
  }
  return out;
}

std::pair<Dataset, Dataset> split_head(const Dataset& dataset, std::size_t head) {
  if (head > dataset.size()) {
    throw std::invalid_argument("split_head: head exceeds dataset size");
  }
  std::vector<std::size_t> front(head), back(dataset.size() - head);
  std::iota(front.begin(), front.end(), std::size_t{0});
  std::iota(back.begin(), back.end(), head);
  return {subset(dataset, front), subset(dataset, back)};
}

}  // namespace otafl::data
