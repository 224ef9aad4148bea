#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "naomi/errors.hpp"
#include "naomi/scheduler.hpp"
#include "naomi/tensor.hpp"

namespace naomi::io {

// Sidecar metadata carried on the first line of a dataset file.
struct DatasetMeta {
  int64_t T = 0;
  int64_t D = 0;
  std::optional<std::vector<double>> norm_mean;
  std::optional<std::vector<double>> norm_scale;
  // Free-form extras (e.g. simulator config) preserved on round-trip.
  std::map<std::string, double> extra;
};

struct SequenceRecord {
  std::string id;
  Tensor values;  // T x D
  std::optional<Mask> mask;
};

struct DatasetFile {
  DatasetMeta meta;
  std::vector<SequenceRecord> sequences;
};

// JSON-lines layout: first line {"meta": {...}}, then one object per
// sequence with id, values and an optional 0/1 mask array.
DatasetFile read_dataset(const std::string& path);
void write_dataset(const std::string& path, const DatasetFile& dataset);

// Mask files: one '0'/'1' string of length T per line.
std::vector<Mask> read_mask_file(const std::string& path, int64_t expected_len);
void write_mask_file(const std::string& path, const std::vector<Mask>& masks);

// Writes via a temp file in the same directory plus rename, so interrupted
// runs never leave a truncated file at the target path.
void atomic_write_text(const std::string& path, const std::string& content);

}  // namespace naomi::io
