// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dataset ingestion and worker partitioning.
//
// Two on-disk formats:
//   - CSV: UTF-8, comma separated, one header row, label in the last column.
//   - IDX: big-endian, magic 0x00000803 for images and 0x00000801 for labels.
// Parse failures throw FormatError carrying the byte offset (IDX) or line
// number (CSV) of the problem.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sgsim/errors.hpp"
#include "sgsim/rng.hpp"

namespace sgsim {

struct Dataset {
  std::size_t n = 0;         // samples
  std::size_t features = 0;  // per-sample feature count
  std::size_t classes = 0;
  std::vector<double> x;  // row-major, n * features
  std::vector<int> labels;

  const double* row(std::size_t i) const { return x.data() + i * features; }
};

enum class DatasetFormat { csv, idx };

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path, 0, "cannot open file");

  Dataset ds;
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) throw FormatError(path, 1, "missing header row");
  line_no = 1;
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (columns < 2) throw FormatError(path, line_no, "need at least one feature and a label column");
  ds.features = columns - 1;

  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(row, cell, ',')) {
      ++col;
      char* end = nullptr;
      const double value = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw FormatError(path, line_no, "malformed value '" + cell + "'");
      if (col <= ds.features) {
        ds.x.push_back(value);
      } else {
        const auto label = static_cast<long>(value);
        if (static_cast<double>(label) != value || label < 0)
          throw FormatError(path, line_no, "label must be a non-negative integer");
        ds.labels.push_back(static_cast<int>(label));
        if (label > max_label) max_label = static_cast<int>(label);
      }
    }
    if (col != columns)
      throw FormatError(path, line_no,
                        "expected " + std::to_string(columns) + " columns, got " + std::to_string(col));
  }
  ds.n = ds.labels.size();
  if (ds.n == 0) throw FormatError(path, line_no, "no data rows");
  ds.classes = static_cast<std::size_t>(max_label) + 1;
  return ds;
}

namespace detail {

inline std::uint32_t read_be32(std::ifstream& in, const std::string& path, std::size_t offset) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4))
    throw FormatError(path, offset, "unexpected end of file");
  return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
         (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

}  // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049

/// Loads an IDX image/label file pair. Pixel values are scaled to [0, 1].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError(images_path, 0, "cannot open file");
  if (const auto magic = detail::read_be32(img, images_path, 0); magic != kIdxImageMagic)
    throw FormatError(images_path, 0,
                      "bad image magic " + std::to_string(magic) + ", expected 2051");
  const std::uint32_t count = detail::read_be32(img, images_path, 4);
  const std::uint32_t rows = detail::read_be32(img, images_path, 8);
  const std::uint32_t cols = detail::read_be32(img, images_path, 12);

  std::ifstream lbl(labels_path, std::ios::binary);
  if (!lbl) throw FormatError(labels_path, 0, "cannot open file");
  if (const auto magic = detail::read_be32(lbl, labels_path, 0); magic != kIdxLabelMagic)
    throw FormatError(labels_path, 0,
                      "bad label magic " + std::to_string(magic) + ", expected 2049");
  const std::uint32_t label_count = detail::read_be32(lbl, labels_path, 4);
  if (label_count != count)
    throw FormatError(labels_path, 4, "label count " + std::to_string(label_count) +
                                          " does not match image count " + std::to_string(count));

  Dataset ds;
  ds.n = count;
  ds.features = static_cast<std::size_t>(rows) * cols;
  ds.x.resize(ds.n * ds.features);
  ds.labels.resize(ds.n);

  std::vector<unsigned char> buf(ds.features);
  for (std::size_t i = 0; i < ds.n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError(images_path, 16 + i * ds.features, "unexpected end of image data");
    for (std::size_t j = 0; j < ds.features; ++j)
      ds.x[i * ds.features + j] = static_cast<double>(buf[j]) / 255.0;
    char label = 0;
    if (!lbl.read(&label, 1)) throw FormatError(labels_path, 8 + i, "unexpected end of label data");
    const auto value = static_cast<unsigned char>(label);
    if (value > 9) throw FormatError(labels_path, 8 + i, "label out of range");
    ds.labels[i] = value;
  }
  ds.classes = 10;
  return ds;
}

/// Loads `path`. For IDX, `path` names the image file and the label file is
/// derived by the conventional substitutions (images -> labels, idx3 -> idx1).
inline Dataset load_dataset(const std::string& path, DatasetFormat format) {
  if (format == DatasetFormat::csv) return load_csv(path);
  std::string labels = path;
  const auto replace = [&](const std::string& from, const std::string& to) {
    if (const auto pos = labels.find(from); pos != std::string::npos)
      labels.replace(pos, from.size(), to);
  };
  replace("images", "labels");
  replace("idx3", "idx1");
  if (labels == path) throw FormatError(path, 0, "cannot derive label file name");
  return load_idx(path, labels);
}

/// Synthetic classification data: Gaussian class centers plus unit noise.
inline Dataset make_blob_dataset(std::size_t n, std::size_t features, std::size_t classes,
                                 Rng rng) {
  Dataset ds;
  ds.n = n;
  ds.features = features;
  ds.classes = classes;
  ds.x.resize(n * features);
  ds.labels.resize(n);

  std::vector<double> centers(classes * features);
  for (auto& c : centers) c = 3.0 * rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<int>(i % classes);
    ds.labels[i] = label;
    for (std::size_t j = 0; j < features; ++j)
      ds.x[i * features + j] = centers[static_cast<std::size_t>(label) * features + j] + rng.normal();
  }
  return ds;
}

/// Random split into `workers` disjoint shards of (near) equal size; the
/// first (n mod workers) shards take the extra sample. Deterministic in rng.
inline std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, std::size_t workers,
                                                               Rng rng) {
  if (workers == 0) throw std::invalid_argument("partition_indices: workers must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }

  std::vector<std::vector<std::size_t>> shards(workers);
  const std::size_t base = n / workers;
  const std::size_t extra = n % workers;
  std::size_t cursor = 0;
  for (std::size_t q = 0; q < workers; ++q) {
    const std::size_t size = base + (q < extra ? 1 : 0);
    shards[q].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                     order.begin() + static_cast<std::ptrdiff_t>(cursor + size));
    cursor += size;
  }
  return shards;
}

}  // namespace sgsim
