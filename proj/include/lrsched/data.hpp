// Copyright 2026 The lrsched Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file data.hpp
/// Datasets, IDX ingestion, synthetic blobs, holdout splits and mini-batch
/// sampling.

#pragma once

#include "lrsched/core.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lrsched {

/// Reproducible random stream identified by (seed, label). Streams with
/// different labels under one seed are seeded independently, so adding a new
/// consumer never shifts the draws of an existing one.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label)
      : seed_(seed), label_(std::move(label)), engine_(derive(seed_, label_)) {}

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  /// Independent stream "label/suffix" under the same seed.
  RngStream child(std::string_view suffix) const {
    return RngStream(seed_, label_ + "/" + std::string(suffix));
  }

  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return splitmix64(splitmix64(seed) ^ h);
  }

  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
};

/// Labelled feature matrix. Immutable once built; share through
/// std::shared_ptr<const Dataset>.
struct Dataset {
  RowMatrix features;        // n x p
  std::vector<int> labels;   // n
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }

  void validate() const {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
      throw ConsistencyError("dataset: feature rows (" + std::to_string(features.rows()) +
                             ") != labels (" + std::to_string(labels.size()) + ")");
    require(num_classes > 0, "dataset: num_classes must be positive");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw ConsistencyError("dataset: label " + std::to_string(y) + " outside [0, " +
                               std::to_string(num_classes) + ")");
  }

  Dataset subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.labels.resize(rows.size());
    out.num_classes = num_classes;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
      out.labels[i] = labels[rows[i]];
    }
    return out;
  }
};

using DatasetPtr = std::shared_ptr<const Dataset>;

/// Index set into a dataset. A batch without data stands for the
/// deterministic full objective (analytic test functions).
struct Batch {
  DatasetPtr data;
  std::vector<std::size_t> rows;

  bool has_data() const { return data != nullptr; }
  std::size_t size() const { return rows.size(); }

  static Batch all_of(DatasetPtr ds) {
    Batch b;
    b.rows.resize(ds->size());
    std::iota(b.rows.begin(), b.rows.end(), std::size_t{0});
    b.data = std::move(ds);
    return b;
  }
};

// ---------------------------------------------------------------------------
// IDX format

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw IoError(path + ": truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

inline std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Load an IDX image/label pair. Pixels are scaled by 1/255, the class count
/// is one past the largest label.
inline Dataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path) {
  const std::string ipath = images_path.string();
  const std::string lpath = labels_path.string();

  auto images = detail::open_binary(images_path);
  if (const auto magic = detail::read_be32(images, ipath); magic != kIdxImageMagic)
    throw FormatError(ipath + ": bad image magic " + std::to_string(magic));
  const std::uint32_t n_images = detail::read_be32(images, ipath);
  const std::uint32_t rows = detail::read_be32(images, ipath);
  const std::uint32_t cols = detail::read_be32(images, ipath);

  auto labels = detail::open_binary(labels_path);
  if (const auto magic = detail::read_be32(labels, lpath); magic != kIdxLabelMagic)
    throw FormatError(lpath + ": bad label magic " + std::to_string(magic));
  const std::uint32_t n_labels = detail::read_be32(labels, lpath);

  if (n_images != n_labels)
    throw ConsistencyError("IDX image count " + std::to_string(n_images) + " != label count " +
                           std::to_string(n_labels));

  const std::size_t n = n_images;
  const std::size_t p = std::size_t{rows} * cols;
  std::vector<unsigned char> pixels(n * p);
  images.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (static_cast<std::size_t>(images.gcount()) != pixels.size()) throw IoError(ipath + ": truncated pixel data");

  std::vector<unsigned char> raw_labels(n);
  labels.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(labels.gcount()) != n) throw IoError(lpath + ": truncated label data");

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n * p; ++i) ds.features.data()[i] = pixels[i] / 255.0;
  ds.labels.assign(raw_labels.begin(), raw_labels.end());
  ds.num_classes = n == 0 ? 1 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

/// Write a dataset as an IDX pair (images as rows x cols). Feature values are
/// rounded to the nearest multiple of 1/255, so datasets loaded from IDX
/// round-trip exactly.
inline void write_idx_dataset(const Dataset& ds, const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path, std::uint32_t rows,
                              std::uint32_t cols) {
  require(std::size_t{rows} * cols == ds.feature_dim(), "write_idx_dataset: rows*cols != feature dim");
  std::ofstream images(images_path, std::ios::binary);
  std::ofstream labels(labels_path, std::ios::binary);
  if (!images || !labels) throw IoError("cannot write IDX files");
  detail::write_be32(images, kIdxImageMagic);
  detail::write_be32(images, static_cast<std::uint32_t>(ds.size()));
  detail::write_be32(images, rows);
  detail::write_be32(images, cols);
  std::vector<char> buffer(static_cast<std::size_t>(ds.features.size()));
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const double v = std::clamp(ds.features.data()[i], 0.0, 1.0);
    buffer[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  images.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  detail::write_be32(labels, kIdxLabelMagic);
  detail::write_be32(labels, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) labels.put(static_cast<char>(static_cast<unsigned char>(y)));
  if (!images || !labels) throw IoError("short write to IDX files");
}

// ---------------------------------------------------------------------------
// Synthetic data and splits

/// Gaussian blobs around random unit-norm centers. Labels cycle through the
/// classes so counts differ by at most one.
inline Dataset make_blobs(std::size_t n, int num_classes, std::size_t dim, double spread, RngStream rng) {
  require(num_classes > 0, "make_blobs: num_classes must be positive");
  require(n >= static_cast<std::size_t>(num_classes), "make_blobs: n < num_classes");
  require(dim >= 1, "make_blobs: dim must be >= 1");
  require(spread >= 0.0, "make_blobs: spread must be nonnegative");

  RowMatrix centers(num_classes, static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) = rng.normal();
    centers.row(c) /= centers.row(c).norm();
  }

  Dataset ds;
  ds.num_classes = num_classes;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    ds.labels[i] = y;
    for (Eigen::Index j = 0; j < centers.cols(); ++j)
      ds.features(static_cast<Eigen::Index>(i), j) = centers(y, j) + spread * rng.normal();
  }
  return ds;
}

/// Disjoint uniformly sampled subsets with the requested sizes, in order.
inline std::vector<Dataset> partition(const Dataset& ds, const std::vector<std::size_t>& sizes, RngStream rng) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  require(total <= ds.size(), "partition: requested " + std::to_string(total) + " rows from a dataset of " +
                                  std::to_string(ds.size()));
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());

  std::vector<Dataset> parts;
  auto it = perm.begin();
  for (std::size_t s : sizes) {
    parts.push_back(ds.subset(std::vector<std::size_t>(it, it + static_cast<std::ptrdiff_t>(s))));
    it += static_cast<std::ptrdiff_t>(s);
  }
  return parts;
}

inline std::pair<Dataset, Dataset> holdout_split(const Dataset& ds, std::size_t n_train, std::size_t n_val,
                                                 RngStream rng) {
  require(n_train > 0 && n_val > 0, "holdout_split: sizes must be positive");
  auto parts = partition(ds, {n_train, n_val}, std::move(rng));
  return {std::move(parts[0]), std::move(parts[1])};
}

/// Standardize every feature with the mean and standard deviation of
/// `reference` (constant features are only centered).
inline void normalize_mean_std(Dataset& ds, const Dataset& reference) {
  const Eigen::RowVectorXd mean = reference.features.colwise().mean();
  Eigen::RowVectorXd sd = ((reference.features.rowwise() - mean).array().square().colwise().mean()).sqrt();
  sd = sd.unaryExpr([](double s) { return s > 0.0 ? s : 1.0; });
  ds.features = ((ds.features.rowwise() - mean).array().rowwise() / sd.array()).matrix();
}

// ---------------------------------------------------------------------------
// Mini-batch sampling

enum class SamplingPolicy { kWithReplacement, kEpochShuffle };

/// Emits index sets of exactly batch_size rows. kEpochShuffle walks a fresh
/// permutation each epoch and drops the tail that does not fill a batch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, RngStream rng,
               SamplingPolicy policy = SamplingPolicy::kWithReplacement)
      : n_(n), batch_size_(batch_size), rng_(std::move(rng)), policy_(policy) {
    require(n > 0, "BatchSampler: empty dataset");
    require(batch_size > 0, "BatchSampler: batch_size must be positive");
    if (policy_ == SamplingPolicy::kEpochShuffle)
      require(batch_size <= n, "BatchSampler: batch_size > n without replacement");
  }

  std::size_t batch_size() const { return batch_size_; }
  std::size_t dataset_size() const { return n_; }
  SamplingPolicy policy() const { return policy_; }
  /// Completed passes (kEpochShuffle) or batch_size*draws/n (with replacement).
  std::size_t epoch() const {
    return policy_ == SamplingPolicy::kEpochShuffle ? epochs_ : (draws_ * batch_size_) / n_;
  }

  std::vector<std::size_t> next_indices() {
    std::vector<std::size_t> idx(batch_size_);
    if (policy_ == SamplingPolicy::kWithReplacement) {
      for (auto& i : idx) i = rng_.index(n_);
    } else {
      if (perm_.empty() || cursor_ + batch_size_ > perm_.size()) {
        if (!perm_.empty()) ++epochs_;
        perm_.resize(n_);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        std::shuffle(perm_.begin(), perm_.end(), rng_.engine());
        cursor_ = 0;
      }
      std::copy_n(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_), batch_size_, idx.begin());
      cursor_ += batch_size_;
    }
    ++draws_;
    return idx;
  }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  RngStream rng_;
  SamplingPolicy policy_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
  std::size_t epochs_ = 0;
  std::size_t draws_ = 0;
};

inline Batch next_batch(BatchSampler& sampler, const DatasetPtr& ds) {
  require(ds && ds->size() == sampler.dataset_size(), "next_batch: sampler not bound to this dataset");
  return Batch{ds, sampler.next_indices()};
}

}  // namespace lrsched
