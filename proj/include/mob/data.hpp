// Copyright 2026 The mob Authors.
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

#pragma once

// IDX (MNIST) ingestion, Split-MNIST task streams and a synthetic Gaussian stream.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mob/nn.hpp"

namespace mob {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Decoded IDX file of unsigned bytes.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t count() const { return dims.empty() ? 0 : dims.front(); }
  bool is_images() const { return magic == kIdxImagesMagic; }
  bool is_labels() const { return magic == kIdxLabelsMagic; }
};

/// Parses an unsigned-byte IDX file (images 0x803 or labels 0x801).
IdxFile parse_idx(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_idx(const IdxFile& idx);

/// Reads a file, transparently gunzipping it when it starts with the gzip magic.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

IdxFile read_idx(const std::filesystem::path& path);

/// A labelled image set with pixels scaled to [0,1].
struct LabelledSet {
  Matrix images;
  std::vector<int> labels;
};

LabelledSet to_labelled_set(const IdxFile& images, const IdxFile& labels);

struct MnistData {
  LabelledSet train;
  LabelledSet test;
};

/// Looks for train-/t10k- images and labels in `dir`, plain or .gz.
MnistData load_mnist(const std::filesystem::path& dir);

/// --data-dir if given, else $MOB_DATA_DIR.
std::optional<std::filesystem::path> resolve_data_dir(const std::optional<std::string>& flag);

struct Task {
  std::vector<Batch> batches;
  Examples eval;
  std::vector<int> classes;
};

struct TaskStream {
  std::vector<Task> tasks;
  std::vector<std::size_t> switch_points;  // global step index where each task starts
  std::size_t input_dim = 784;
  std::size_t num_classes = 10;

  std::size_t total_batches() const;
};

struct SplitMnistOptions {
  std::uint64_t seed = 0;
  std::size_t per_task_train = 2000;  // 0 takes every available example
  std::size_t per_task_eval = 500;    // 0 takes every available example
  std::size_t batch_size = 32;
  std::size_t epochs_per_task = 1;
};

/// Five tasks over digit pairs (0,1) (2,3) (4,5) (6,7) (8,9), single 10-way label space.
TaskStream build_split_mnist(const MnistData& data, const SplitMnistOptions& opt);

struct SyntheticOptions {
  std::size_t n_tasks = 2;
  std::size_t classes_per_task = 2;
  std::size_t dim = 784;
  std::size_t num_classes = 10;
  double sigma = 0.1;
  double separation = 10.0;          // distance between any two cluster means, in sigmas
  std::size_t batches_per_task = 500;
  std::size_t batch_size = 32;
  std::size_t eval_per_task = 500;
  std::uint64_t seed = 0;
};

struct SyntheticStream {
  TaskStream stream;
  Matrix cluster_means;  // row = global class label
  std::vector<std::string> warnings;
};

/// Each task is a pair of isotropic Gaussian clusters with their own labels.
/// Means sit on disjoint coordinate blocks so every pair is exactly
/// `separation * sigma` apart.
SyntheticStream build_synthetic(const SyntheticOptions& opt);

}  // namespace mob
