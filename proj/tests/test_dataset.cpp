// SPDX-License-Identifier: Apache-2.0

#include "sgsim/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "sgsim/errors.hpp"
#include "sgsim/rng.hpp"

namespace {

using sgsim::Dataset;
using sgsim::FormatError;

std::string temp_path(const std::string& name) {
  return (std::filesystem::path(::testing::TempDir()) / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

TEST(Csv, SmallFixture) {
  const auto path = temp_path("ok.csv");
  write_file(path, "f0,f1,label\n0.5,1.5,0\n-2,3,1\n0,0,1\n");
  const Dataset ds = sgsim::load_csv(path);
  EXPECT_EQ(ds.n, 3u);
  EXPECT_EQ(ds.features, 2u);
  EXPECT_EQ(ds.classes, 2u);
  EXPECT_DOUBLE_EQ(ds.row(1)[0], -2.0);
  EXPECT_EQ(ds.labels[1], 1);
}

TEST(Csv, MalformedValueNamesLine) {
  const auto path = temp_path("bad_value.csv");
  write_file(path, "f0,label\n1,0\nabc,1\n");
  try {
    sgsim::load_csv(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.position(), 3u);
  }
}

TEST(Csv, WrongColumnCountNamesLine) {
  const auto path = temp_path("bad_cols.csv");
  write_file(path, "f0,f1,label\n1,2,0\n1,2\n");
  try {
    sgsim::load_csv(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.position(), 3u);
  }
}

TEST(Csv, NonIntegerLabelRejected) {
  const auto path = temp_path("bad_label.csv");
  write_file(path, "f0,label\n1,0.5\n");
  EXPECT_THROW(sgsim::load_csv(path), FormatError);
}

void write_idx_pair(const std::string& images, const std::string& labels, std::uint32_t magic_img,
                    std::uint32_t magic_lbl, std::uint32_t count = 2) {
  {
    std::ofstream out(images, std::ios::binary);
    write_be32(out, magic_img);
    write_be32(out, count);
    write_be32(out, 2);
    write_be32(out, 2);
    for (std::uint32_t i = 0; i < count * 4; ++i) out.put(static_cast<char>(i * 10));
  }
  {
    std::ofstream out(labels, std::ios::binary);
    write_be32(out, magic_lbl);
    write_be32(out, count);
    for (std::uint32_t i = 0; i < count; ++i) out.put(static_cast<char>(i % 10));
  }
}

TEST(Idx, SmallFixture) {
  const auto images = temp_path("train-images-idx3-ubyte");
  const auto labels = temp_path("train-labels-idx1-ubyte");
  write_idx_pair(images, labels, 2051, 2049);
  const Dataset ds = sgsim::load_idx(images, labels);
  EXPECT_EQ(ds.n, 2u);
  EXPECT_EQ(ds.features, 4u);
  EXPECT_DOUBLE_EQ(ds.row(0)[1], 10.0 / 255.0);
  EXPECT_EQ(ds.labels[1], 1);

  // load_dataset derives the label path from the image path
  const Dataset via_path = sgsim::load_dataset(images, sgsim::DatasetFormat::idx);
  EXPECT_EQ(via_path.n, ds.n);
}

TEST(Idx, WrongMagicNamesOffsetZero) {
  const auto images = temp_path("bad-images-idx3-ubyte");
  const auto labels = temp_path("bad-labels-idx1-ubyte");
  write_idx_pair(images, labels, 1234, 2049);
  try {
    sgsim::load_idx(images, labels);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.position(), 0u);
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(Idx, CountMismatchRejected) {
  const auto images = temp_path("mismatch-images-idx3-ubyte");
  const auto labels = temp_path("mismatch-labels-idx1-ubyte");
  write_idx_pair(images, labels, 2051, 2049);
  {
    std::ofstream out(labels, std::ios::binary);
    write_be32(out, 2049);
    write_be32(out, 5);
  }
  EXPECT_THROW(sgsim::load_idx(images, labels), FormatError);
}

TEST(Partition, EqualSplitWithRemainder) {
  const auto shards = sgsim::partition_indices(10, 3, sgsim::Rng(99));
  ASSERT_EQ(shards.size(), 3u);
  EXPECT_EQ(shards[0].size(), 4u);
  EXPECT_EQ(shards[1].size(), 3u);
  EXPECT_EQ(shards[2].size(), 3u);

  std::set<std::size_t> all;
  for (const auto& shard : shards)
    for (std::size_t idx : shard) EXPECT_TRUE(all.insert(idx).second) << "duplicate index";
  EXPECT_EQ(all.size(), 10u);
  EXPECT_EQ(*all.begin(), 0u);
  EXPECT_EQ(*all.rbegin(), 9u);
}

TEST(Partition, DeterministicGivenSeed) {
  const auto a = sgsim::partition_indices(100, 7, sgsim::Rng(5));
  const auto b = sgsim::partition_indices(100, 7, sgsim::Rng(5));
  EXPECT_EQ(a, b);
  const auto c = sgsim::partition_indices(100, 7, sgsim::Rng(6));
  EXPECT_NE(a, c);
}

TEST(Blobs, ShapesAndDeterminism) {
  const Dataset a = sgsim::make_blob_dataset(30, 5, 3, sgsim::Rng(1));
  EXPECT_EQ(a.n, 30u);
  EXPECT_EQ(a.features, 5u);
  EXPECT_EQ(a.classes, 3u);
  EXPECT_EQ(a.x.size(), 150u);
  const Dataset b = sgsim::make_blob_dataset(30, 5, 3, sgsim::Rng(1));
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.labels, b.labels);
}

}  // namespace
