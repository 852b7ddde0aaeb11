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

#include "mob/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mob {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw DataError("not an IDX file: shorter than the 4-byte magic");
  IdxFile idx;
  idx.magic = read_be32(bytes, 0);
  // unsigned byte payload, 1 (labels) or 3 (images) dimensions
  if (idx.magic != kIdxImagesMagic && idx.magic != kIdxLabelsMagic)
    throw DataError("not an IDX file: magic " + hex32(idx.magic));
  const std::size_t ndims = idx.magic & 0xff;
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() < header)
    throw DataError("short read, expected " + std::to_string(header) + " header bytes, got " +
                    std::to_string(bytes.size()));
  std::size_t expected = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    idx.dims.push_back(read_be32(bytes, 4 + 4 * d));
    expected *= idx.dims.back();
  }
  const std::size_t have = bytes.size() - header;
  if (have < expected)
    throw DataError("short read, expected " + std::to_string(expected) + " bytes, got " +
                    std::to_string(have));
  if (have > expected)
    throw DataError("IDX payload has " + std::to_string(have - expected) +
                    " trailing bytes beyond the declared dimensions");
  idx.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return idx;
}

std::vector<std::uint8_t> serialize_idx(const IdxFile& idx) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * idx.dims.size() + idx.payload.size());
  write_be32(out, idx.magic);
  for (auto d : idx.dims) write_be32(out, d);
  out.insert(out.end(), idx.payload.begin(), idx.payload.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;

  gzFile gz = gzopen(path.string().c_str(), "rb");
  if (!gz) throw DataError("cannot open gzip stream " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  while (true) {
    const int n = gzread(gz, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int err = 0;
      std::string msg = gzerror(gz, &err);
      gzclose(gz);
      throw DataError("gzip error in " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(gz);
  return out;
}

IdxFile read_idx(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_idx(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

LabelledSet to_labelled_set(const IdxFile& images, const IdxFile& labels) {
  if (!images.is_images() || images.dims.size() != 3)
    throw DataError("expected an IDX image file (magic 0x00000803)");
  if (!labels.is_labels() || labels.dims.size() != 1)
    throw DataError("expected an IDX label file (magic 0x00000801)");
  if (images.count() != labels.count())
    throw DataError("image count " + std::to_string(images.count()) + " != label count " +
                    std::to_string(labels.count()));
  const std::size_t pixels = std::size_t{images.dims[1]} * images.dims[2];
  LabelledSet set;
  set.images = Matrix(images.count(), pixels);
  for (std::size_t k = 0; k < images.payload.size(); ++k)
    set.images.data[k] = images.payload[k] / 255.0;
  set.labels.reserve(labels.count());
  for (auto v : labels.payload) {
    if (v > 9) throw DataError("label " + std::to_string(v) + " outside [0,10)");
    set.labels.push_back(v);
  }
  return set;
}

namespace {

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* suffix : {"", ".gz"}) {
    auto p = dir / (stem + suffix);
    if (std::filesystem::exists(p)) return p;
  }
  throw DataError("missing " + stem + "[.gz] in " + dir.string() +
                  " (expected train-images-idx3-ubyte, train-labels-idx1-ubyte, "
                  "t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte)");
}

}  // namespace

MnistData load_mnist(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
  MnistData d;
  d.train = to_labelled_set(read_idx(find_idx(dir, "train-images-idx3-ubyte")),
                            read_idx(find_idx(dir, "train-labels-idx1-ubyte")));
  d.test = to_labelled_set(read_idx(find_idx(dir, "t10k-images-idx3-ubyte")),
                           read_idx(find_idx(dir, "t10k-labels-idx1-ubyte")));
  return d;
}

std::optional<std::filesystem::path> resolve_data_dir(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return std::filesystem::path(*flag);
  if (const char* env = std::getenv("MOB_DATA_DIR"); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

std::size_t TaskStream::total_batches() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.batches.size();
  return n;
}

namespace {

Examples gather(const LabelledSet& set, std::span<const std::size_t> rows) {
  Examples ex;
  ex.inputs = Matrix(rows.size(), set.images.cols);
  ex.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto src = set.images.row(rows[k]);
    std::copy(src.begin(), src.end(), ex.inputs.row(k).begin());
    ex.labels.push_back(set.labels[rows[k]]);
  }
  return ex;
}

std::vector<std::size_t> pick_rows(const LabelledSet& set, const std::vector<int>& classes,
                                   std::size_t wanted, Rng& rng, const char* which) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < set.labels.size(); ++r)
    if (std::find(classes.begin(), classes.end(), set.labels[r]) != classes.end())
      rows.push_back(r);
  if (wanted > rows.size())
    throw DataError(std::string("requested ") + std::to_string(wanted) + " " + which +
                    " examples for digits " + std::to_string(classes[0]) + "/" +
                    std::to_string(classes[1]) + " but only " + std::to_string(rows.size()) +
                    " exist");
  std::shuffle(rows.begin(), rows.end(), rng);
  if (wanted > 0) rows.resize(wanted);
  return rows;
}

}  // namespace

TaskStream build_split_mnist(const MnistData& data, const SplitMnistOptions& opt) {
  if (opt.batch_size == 0) throw ContractError("batch_size must be positive");
  if (opt.epochs_per_task == 0) throw ContractError("epochs_per_task must be positive");
  TaskStream stream;
  stream.input_dim = data.train.images.cols;
  stream.num_classes = 10;
  std::size_t step = 0;
  for (int t = 0; t < 5; ++t) {
    Rng rng(derive_seed(opt.seed, 0x5000 + static_cast<std::uint64_t>(t)));
    Task task;
    task.classes = {2 * t, 2 * t + 1};
    auto train_rows = pick_rows(data.train, task.classes, opt.per_task_train, rng, "training");
    auto eval_rows = pick_rows(data.test, task.classes, opt.per_task_eval, rng, "evaluation");
    task.eval = gather(data.test, eval_rows);
    for (std::size_t e = 0; e < opt.epochs_per_task; ++e) {
      if (e > 0) std::shuffle(train_rows.begin(), train_rows.end(), rng);
      for (std::size_t b = 0; b < train_rows.size(); b += opt.batch_size) {
        const std::size_t n = std::min(opt.batch_size, train_rows.size() - b);
        task.batches.push_back(
            Batch{gather(data.train, std::span(train_rows).subspan(b, n)), t});
      }
    }
    stream.switch_points.push_back(step);
    step += task.batches.size();
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

SyntheticStream build_synthetic(const SyntheticOptions& opt) {
  const std::size_t total_classes = opt.n_tasks * opt.classes_per_task;
  if (opt.n_tasks == 0 || opt.classes_per_task == 0) throw ContractError("empty synthetic stream");
  if (total_classes > opt.num_classes)
    throw ContractError("synthetic stream needs more classes than the label space holds");
  if (opt.dim < total_classes) throw ContractError("dimension too small for disjoint cluster blocks");
  if (!(opt.sigma > 0.0)) throw ContractError("sigma must be positive");
  if (opt.batch_size == 0 || opt.batches_per_task == 0)
    throw ContractError("batch size and batches per task must be positive");

  SyntheticStream out;
  if (opt.separation <= 0.0)
    out.warnings.push_back("cluster separation is zero; tasks are not distinguishable");

  Rng rng(opt.seed);
  const std::size_t block = opt.dim / total_classes;
  const double radius = opt.separation * opt.sigma / std::sqrt(2.0);
  out.cluster_means = Matrix(opt.num_classes, opt.dim);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t c = 0; c < total_classes; ++c) {
    const double v = radius / std::sqrt(static_cast<double>(block));
    for (std::size_t k = 0; k < block; ++k)
      out.cluster_means(c, c * block + k) = coin(rng) ? v : -v;
  }

  std::normal_distribution<double> noise(0.0, opt.sigma);
  std::uniform_int_distribution<std::size_t> which(0, opt.classes_per_task - 1);
  auto sample = [&](std::size_t n, std::size_t task) {
    Examples ex;
    ex.inputs = Matrix(n, opt.dim);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t cls = task * opt.classes_per_task + which(rng);
      auto row = ex.inputs.row(r);
      auto mean = out.cluster_means.row(cls);
      for (std::size_t k = 0; k < opt.dim; ++k) row[k] = mean[k] + noise(rng);
      ex.labels.push_back(static_cast<int>(cls));
    }
    return ex;
  };

  TaskStream& s = out.stream;
  s.input_dim = opt.dim;
  s.num_classes = opt.num_classes;
  for (std::size_t t = 0; t < opt.n_tasks; ++t) {
    Task task;
    for (std::size_t c = 0; c < opt.classes_per_task; ++c)
      task.classes.push_back(static_cast<int>(t * opt.classes_per_task + c));
    for (std::size_t b = 0; b < opt.batches_per_task; ++b)
      task.batches.push_back(Batch{sample(opt.batch_size, t), static_cast<int>(t)});
    task.eval = sample(opt.eval_per_task, t);
    s.switch_points.push_back(t * opt.batches_per_task);
    s.tasks.push_back(std::move(task));
  }
  return out;
}

}  // namespace mob
