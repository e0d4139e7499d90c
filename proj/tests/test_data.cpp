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

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace lrsched {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("lrsched_data_" + std::to_string(::getpid()) + "_" +
                                                 std::to_string(counter_++))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

// Features on the 1/255 grid so the IDX encoding is lossless.
Dataset grid_dataset(std::size_t n, std::size_t p, int classes, std::uint64_t seed) {
  RngStream rng(seed, "grid");
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  ds.labels.resize(n);
  ds.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(rng.index(256)) / 255.0;
    ds.labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  }
  return ds;
}

// Dataset whose single feature is the row id, to track rows through splits.
Dataset id_dataset(std::size_t n) {
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), 1);
  ds.labels.assign(n, 0);
  ds.num_classes = 1;
  for (std::size_t i = 0; i < n; ++i) ds.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  return ds;
}

std::set<double> ids(const Dataset& ds) {
  std::set<double> out;
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) out.insert(ds.features(i, 0));
  return out;
}

TEST(Idx, RoundTripIsBitExact) {
  TempDir dir;
  const Dataset ds = grid_dataset(37, 12, 10, 5);
  write_idx_dataset(ds, dir / "img", dir / "lbl", 3, 4);
  const Dataset back = load_idx_dataset(dir / "img", dir / "lbl");
  EXPECT_EQ(back.num_classes, 10);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.feature_dim(), 12u);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_TRUE(back.features == ds.features);
}

TEST(Idx, HeaderIsBigEndian) {
  TempDir dir;
  write_idx_dataset(grid_dataset(2, 6, 2, 1), dir / "img", dir / "lbl", 2, 3);
  std::ifstream in(dir / "img", std::ios::binary);
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), 16);
  const unsigned char expected[16] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3};
  for (int i = 0; i < 16; ++i) EXPECT_EQ(header[i], expected[i]) << "byte " << i;
  EXPECT_EQ(fs::file_size(dir / "img"), 16u + 12u);
  EXPECT_EQ(fs::file_size(dir / "lbl"), 8u + 2u);
}

TEST(Idx, WrongMagicIsFormatError) {
  TempDir dir;
  write_idx_dataset(grid_dataset(4, 4, 2, 1), dir / "img", dir / "lbl", 2, 2);
  // Labels file passed where images are expected and vice versa.
  EXPECT_THROW(load_idx_dataset(dir / "img", dir / "img"), FormatError);
  EXPECT_THROW(load_idx_dataset(dir / "lbl", dir / "lbl"), FormatError);
}

TEST(Idx, TruncatedImageIsIoError) {
  TempDir dir;
  write_idx_dataset(grid_dataset(4, 4, 2, 1), dir / "img", dir / "lbl", 2, 2);
  fs::resize_file(dir / "img", 16);
  EXPECT_THROW(load_idx_dataset(dir / "img", dir / "lbl"), IoError);
  fs::resize_file(dir / "img", 6);
  EXPECT_THROW(load_idx_dataset(dir / "img", dir / "lbl"), IoError);
}

TEST(Idx, CountMismatchIsConsistencyError) {
  TempDir dir;
  write_idx_dataset(grid_dataset(4, 4, 2, 1), dir / "img", dir / "lbl", 2, 2);
  write_idx_dataset(grid_dataset(5, 4, 2, 1), dir / "img5", dir / "lbl5", 2, 2);
  EXPECT_THROW(load_idx_dataset(dir / "img", dir / "lbl5"), ConsistencyError);
}

TEST(Idx, MissingFileIsIoError) {
  EXPECT_THROW(load_idx_dataset("/nonexistent/img", "/nonexistent/lbl"), IoError);
}

TEST(Idx, CanonicalMnistHeadersWhenAvailable) {
  const char* dir = std::getenv("LRSCHED_MNIST_DIR");
  if (dir == nullptr) GTEST_SKIP() << "LRSCHED_MNIST_DIR not set";
  const Dataset ds = load_idx_dataset(fs::path(dir) / "train-images-idx3-ubyte", fs::path(dir) / "train-labels-idx1-ubyte");
  EXPECT_EQ(ds.size(), 60000u);
  EXPECT_EQ(ds.feature_dim(), 784u);
  EXPECT_EQ(ds.num_classes, 10);
}

TEST(Blobs, BalancedAndDeterministic) {
  const Dataset a = make_blobs(100, 2, 2, 0.1, RngStream(1, "blobs"));
  const Dataset b = make_blobs(100, 2, 2, 0.1, RngStream(1, "blobs"));
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 0), 50);
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 1), 50);
  EXPECT_TRUE(a.features == b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NO_THROW(a.validate());
}

TEST(Blobs, UnevenCountsDifferByAtMostOne) {
  const Dataset a = make_blobs(103, 10, 3, 0.1, RngStream(2, "blobs"));
  for (int c = 0; c < 10; ++c) {
    const auto count = std::count(a.labels.begin(), a.labels.end(), c);
    EXPECT_TRUE(count == 10 || count == 11);
  }
}

TEST(Blobs, ZeroSpreadCollapsesToUnitCenters) {
  const Dataset a = make_blobs(30, 3, 5, 0.0, RngStream(4, "blobs"));
  for (std::size_t i = 3; i < a.size(); ++i) {
    EXPECT_TRUE(a.features.row(static_cast<Eigen::Index>(i)) == a.features.row(static_cast<Eigen::Index>(i % 3)));
    EXPECT_NEAR(a.features.row(static_cast<Eigen::Index>(i)).norm(), 1.0, 1e-12);
  }
}

TEST(Blobs, RejectsTooFewPoints) {
  EXPECT_THROW(make_blobs(5, 10, 2, 0.1, RngStream(1, "b")), ArgumentError);
  EXPECT_THROW(make_blobs(50, 10, 0, 0.1, RngStream(1, "b")), ArgumentError);
}

TEST(RngStream, LabelsGiveDifferentReproducibleStreams) {
  RngStream a(7, "x");
  RngStream a2(7, "x");
  RngStream b(7, "y");
  const double xa = a.normal();
  EXPECT_EQ(xa, a2.normal());
  EXPECT_NE(xa, b.normal());
  EXPECT_EQ(a.child("k").label(), "x/k");
}

TEST(Split, DefaultSizesAreDisjoint) {
  const Dataset ds = id_dataset(7700);
  const auto [train, val] = holdout_split(ds, 7000, 700, RngStream(0, "split"));
  EXPECT_EQ(train.size(), 7000u);
  EXPECT_EQ(val.size(), 700u);
  const auto a = ids(train);
  const auto b = ids(val);
  EXPECT_EQ(a.size(), 7000u);
  for (double x : b) EXPECT_EQ(a.count(x), 0u);
}

TEST(Split, ExhaustiveSplitPartitionsTheData) {
  const Dataset ds = id_dataset(50);
  const auto [train, val] = holdout_split(ds, 30, 20, RngStream(9, "split"));
  auto all = ids(train);
  const auto b = ids(val);
  all.insert(b.begin(), b.end());
  EXPECT_EQ(all.size(), 50u);
}

TEST(Split, DisjointForManySeeds) {
  const Dataset ds = id_dataset(60);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto [train, val] = holdout_split(ds, 25, 20, RngStream(seed, "split"));
    const auto a = ids(train);
    for (double x : ids(val)) ASSERT_EQ(a.count(x), 0u) << "seed " << seed;
    ASSERT_EQ(a.size(), 25u);
  }
}

TEST(Split, DeterministicAndSizeChecked) {
  const Dataset ds = id_dataset(20);
  const auto s1 = holdout_split(ds, 10, 5, RngStream(3, "split"));
  const auto s2 = holdout_split(ds, 10, 5, RngStream(3, "split"));
  EXPECT_TRUE(s1.first.features == s2.first.features);
  EXPECT_THROW(holdout_split(ds, 15, 6, RngStream(3, "split")), ArgumentError);
  EXPECT_THROW(holdout_split(ds, 0, 6, RngStream(3, "split")), ArgumentError);
}

TEST(Normalize, MeanStdUsesReferenceStatistics) {
  Dataset ds = make_blobs(200, 2, 3, 1.0, RngStream(5, "b"));
  const Dataset ref = ds;
  normalize_mean_std(ds, ref);
  const Eigen::RowVectorXd mean = ds.features.colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::RowVectorXd var = ds.features.array().square().colwise().mean();
  EXPECT_NEAR(var.maxCoeff(), 1.0, 1e-12);
}

TEST(Sampler, FullBatchWithoutReplacementCoversAllRows) {
  BatchSampler sampler(17, 17, RngStream(1, "s"), SamplingPolicy::kEpochShuffle);
  auto idx = sampler.next_indices();
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 17; ++i) EXPECT_EQ(idx[i], i);
}

TEST(Sampler, SameSeedSameSequence) {
  for (auto policy : {SamplingPolicy::kWithReplacement, SamplingPolicy::kEpochShuffle}) {
    BatchSampler a(50, 7, RngStream(11, "s"), policy);
    BatchSampler b(50, 7, RngStream(11, "s"), policy);
    for (int k = 0; k < 30; ++k) ASSERT_EQ(a.next_indices(), b.next_indices());
  }
}

TEST(Sampler, EpochsArePermutationsWithTailDropped) {
  BatchSampler sampler(10, 3, RngStream(2, "s"), SamplingPolicy::kEpochShuffle);
  for (int epoch = 0; epoch < 4; ++epoch) {
    std::set<std::size_t> seen;
    for (int k = 0; k < 3; ++k)
      for (auto i : sampler.next_indices()) EXPECT_TRUE(seen.insert(i).second);
    EXPECT_EQ(seen.size(), 9u);
  }
  EXPECT_EQ(sampler.epoch(), 3u);
}

TEST(Sampler, WithReplacementIsUniform) {
  // 10^4 single-index draws on n = 10: each count ~ Binomial(10^4, 0.1),
  // sigma = 30, so a 5 sigma band is +-150 around 1000.
  BatchSampler sampler(10, 1, RngStream(123, "s"));
  std::vector<int> counts(10, 0);
  for (int k = 0; k < 10000; ++k) ++counts[sampler.next_indices()[0]];
  for (int c : counts) EXPECT_LE(std::abs(c - 1000), 150);
}

TEST(Sampler, NextBatchBindsDataset) {
  const auto ds = testing::small_blobs(20);
  BatchSampler sampler(20, 5, RngStream(1, "s"));
  const Batch b = next_batch(sampler, ds);
  EXPECT_EQ(b.size(), 5u);
  EXPECT_EQ(b.data, ds);
  for (auto r : b.rows) EXPECT_LT(r, 20u);
  const auto other = testing::small_blobs(30);
  EXPECT_THROW(next_batch(sampler, other), ArgumentError);
  EXPECT_THROW(BatchSampler(10, 11, RngStream(1, "s"), SamplingPolicy::kEpochShuffle), ArgumentError);
}

}  // namespace
}  // namespace lrsched
