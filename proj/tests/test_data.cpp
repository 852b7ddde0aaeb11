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


#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "mob/data.hpp"
#include "mob/engine.hpp"
#include "mob/metrics.hpp"

using namespace mob;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  IdxFile f;
  f.magic = magic;
  f.dims = std::move(dims);
  return serialize_idx(f);
}

std::string error_of(std::span<const std::uint8_t> bytes) {
  try {
    parse_idx(bytes);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch_dir() {
  const fs::path d = fs::temp_directory_path() / ("mob_test_data_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

// Tiny stand-in for MNIST: every image stores (split, row index) in its two pixels,
// so tests can tell exactly which source example ended up where.
MnistData fake_mnist(std::size_t train_per_digit, std::size_t test_per_digit) {
  auto make = [](std::size_t per_digit, double split) {
    LabelledSet s;
    s.images = Matrix(10 * per_digit, 2);
    for (std::size_t r = 0; r < 10 * per_digit; ++r) {
      s.images(r, 0) = split;
      s.images(r, 1) = static_cast<double>(r);
      s.labels.push_back(static_cast<int>(r % 10));
    }
    return s;
  };
  return MnistData{make(train_per_digit, 0.0), make(test_per_digit, 1.0)};
}

}  // namespace

TEST_CASE("a minimal IDX image file parses") {
  auto bytes = header(kIdxImagesMagic, {1, 28, 28});
  REQUIRE(bytes.size() == 16);
  CHECK(bytes[2] == 0x08);
  CHECK(bytes[3] == 0x03);
  for (int k = 0; k < 784; ++k) bytes.push_back(static_cast<std::uint8_t>(k % 256));
  const IdxFile idx = parse_idx(bytes);
  CHECK(idx.is_images());
  CHECK(idx.count() == 1);
  CHECK(idx.dims == std::vector<std::uint32_t>{1, 28, 28});
  CHECK(idx.payload.size() == 784);
  CHECK(idx.payload[300] == 300 % 256);
}

TEST_CASE("IDX rejections") {
  SUBCASE("wrong magic") {
    auto bytes = header(0x00000899, {1, 28, 28});
    bytes.resize(bytes.size() + 784);
    CHECK(error_of(bytes).find("not an IDX file") != std::string::npos);
  }
  SUBCASE("too short for a magic") {
    const std::vector<std::uint8_t> bytes{0, 0};
    CHECK(error_of(bytes).find("not an IDX file") != std::string::npos);
  }
  SUBCASE("truncated payload") {
    auto bytes = header(kIdxLabelsMagic, {10});
    bytes.resize(bytes.size() + 7);
    CHECK(error_of(bytes).find("short read, expected 10 bytes") != std::string::npos);
  }
  SUBCASE("truncated header") {
    auto bytes = header(kIdxImagesMagic, {1, 28, 28});
    bytes.resize(10);
    CHECK(error_of(bytes).find("short read") != std::string::npos);
  }
  SUBCASE("trailing bytes") {
    auto bytes = header(kIdxLabelsMagic, {3});
    bytes.resize(bytes.size() + 4);
    CHECK(error_of(bytes).find("trailing") != std::string::npos);
  }
}

TEST_CASE("IDX serialize round trip is byte-exact") {
  std::mt19937 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint32_t n = gen() % 5 + 1;
    auto bytes = trial % 2 ? header(kIdxLabelsMagic, {n}) : header(kIdxImagesMagic, {n, 3, 4});
    const std::size_t payload = trial % 2 ? n : n * 12;
    for (std::size_t k = 0; k < payload; ++k) bytes.push_back(static_cast<std::uint8_t>(gen()));
    CHECK(serialize_idx(parse_idx(bytes)) == bytes);
  }
}

TEST_CASE("plain and gzip files read identically") {
  auto bytes = header(kIdxLabelsMagic, {5});
  for (std::uint8_t v : {3, 1, 4, 1, 5}) bytes.push_back(v);
  const fs::path dir = scratch_dir();
  const fs::path plain = dir / "labels";
  const fs::path packed = dir / "labels.gz";
  {
    std::ofstream out(plain, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  gzFile gz = gzopen(packed.string().c_str(), "wb");
  REQUIRE(gz != nullptr);
  gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(gz);
  CHECK(read_file_bytes(plain) == bytes);
  CHECK(read_file_bytes(packed) == bytes);
  CHECK(read_idx(packed).payload == std::vector<std::uint8_t>{3, 1, 4, 1, 5});
  CHECK_THROWS_AS(read_file_bytes(dir / "missing"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("labelled sets scale pixels and validate labels") {
  IdxFile images{kIdxImagesMagic, {2, 1, 2}, {0, 255, 51, 102}};
  IdxFile labels{kIdxLabelsMagic, {2}, {7, 9}};
  const LabelledSet s = to_labelled_set(images, labels);
  CHECK(s.images.rows == 2);
  CHECK(s.images.cols == 2);
  CHECK(s.images(0, 1) == 1.0);
  CHECK(s.images(1, 0) == doctest::Approx(0.2));
  CHECK(s.labels == std::vector<int>{7, 9});
  labels.payload[1] = 10;
  CHECK_THROWS_AS(to_labelled_set(images, labels), DataError);
  CHECK_THROWS_AS(to_labelled_set(labels, images), DataError);
  IdxFile three{kIdxLabelsMagic, {3}, {1, 2, 3}};
  CHECK_THROWS_AS(to_labelled_set(images, three), DataError);
}

TEST_CASE("split stream structure") {
  const MnistData data = fake_mnist(1100, 300);
  SplitMnistOptions opt;
  opt.seed = 4;
  const TaskStream s = build_split_mnist(data, opt);
  REQUIRE(s.tasks.size() == 5);
  CHECK(s.num_classes == 10);
  std::size_t step = 0;
  for (std::size_t t = 0; t < 5; ++t) {
    const Task& task = s.tasks[t];
    const std::set<int> pair{2 * static_cast<int>(t), 2 * static_cast<int>(t) + 1};
    CHECK(task.classes == std::vector<int>{2 * static_cast<int>(t), 2 * static_cast<int>(t) + 1});
    CHECK(task.batches.size() == 63);
    CHECK(task.batches.back().examples.size() == 2000 - 62 * 32);
    CHECK(s.switch_points[t] == step);
    step += task.batches.size();
    std::set<double> seen;
    for (const Batch& b : task.batches) {
      CHECK(b.task_id == static_cast<int>(t));
      for (std::size_t r = 0; r < b.examples.size(); ++r) {
        CHECK(pair.count(b.examples.labels[r]) == 1);
        CHECK(b.examples.inputs(r, 0) == 0.0);  // from the training split
        seen.insert(b.examples.inputs(r, 1));
      }
    }
    CHECK(seen.size() == 2000);  // no example drawn twice
    CHECK(task.eval.size() == 500);
    for (std::size_t r = 0; r < task.eval.size(); ++r) {
      CHECK(pair.count(task.eval.labels[r]) == 1);
      CHECK(task.eval.inputs(r, 0) == 1.0);  // from the held-out split
    }
  }
  CHECK(s.total_batches() == 315);
}

TEST_CASE("split stream order depends only on the seed") {
  const MnistData data = fake_mnist(300, 100);
  SplitMnistOptions opt;
  opt.per_task_train = 400;
  opt.per_task_eval = 100;
  opt.seed = 9;
  const TaskStream a = build_split_mnist(data, opt);
  const TaskStream b = build_split_mnist(data, opt);
  opt.seed = 10;
  const TaskStream c = build_split_mnist(data, opt);
  bool differs = false;
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t k = 0; k < a.tasks[t].batches.size(); ++k) {
      CHECK(a.tasks[t].batches[k].examples.inputs.data == b.tasks[t].batches[k].examples.inputs.data);
      differs |= a.tasks[t].batches[k].examples.inputs.data != c.tasks[t].batches[k].examples.inputs.data;
    }
  CHECK(differs);
}

TEST_CASE("split stream options") {
  const MnistData data = fake_mnist(300, 100);
  SplitMnistOptions opt;
  SUBCASE("subsample larger than the pool") {
    opt.per_task_train = 601;
    CHECK_THROWS_AS(build_split_mnist(data, opt), DataError);
    opt.per_task_train = 0;
    opt.per_task_eval = 201;
    CHECK_THROWS_AS(build_split_mnist(data, opt), DataError);
  }
  SUBCASE("zero takes everything") {
    opt.per_task_train = 0;
    opt.per_task_eval = 0;
    const TaskStream s = build_split_mnist(data, opt);
    CHECK(s.tasks[2].eval.size() == 200);
    CHECK(s.tasks[2].batches.size() == (600 + 31) / 32);
  }
  SUBCASE("epochs repeat the task") {
    opt.per_task_train = 64;
    opt.per_task_eval = 10;
    opt.epochs_per_task = 3;
    const TaskStream s = build_split_mnist(data, opt);
    CHECK(s.tasks[0].batches.size() == 6);
    CHECK(s.switch_points[1] == 6);
  }
}

TEST_CASE("synthetic stream geometry") {
  SyntheticOptions o;
  o.seed = 1;
  o.batches_per_task = 40;
  const SyntheticStream s = build_synthetic(o);
  CHECK(s.warnings.empty());
  CHECK(s.stream.switch_points == std::vector<std::size_t>{0, 40});
  CHECK(s.stream.input_dim == 784);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < o.dim; ++k) {
        const double d = s.cluster_means(a, k) - s.cluster_means(b, k);
        d2 += d * d;
      }
      CHECK(std::sqrt(d2) == doctest::Approx(o.separation * o.sigma));
    }
  for (std::size_t t = 0; t < 2; ++t)
    for (const Batch& b : s.stream.tasks[t].batches)
      for (int l : b.examples.labels) CHECK((l == 2 * static_cast<int>(t) || l == 2 * static_cast<int>(t) + 1));

  SyntheticOptions z = o;
  z.separation = 0.0;
  CHECK(build_synthetic(z).warnings.size() == 1);
  const SyntheticStream again = build_synthetic(o);
  CHECK(again.stream.tasks[1].batches[7].examples.inputs.data ==
        s.stream.tasks[1].batches[7].examples.inputs.data);
}

TEST_CASE("synthetic class means match the configured means") {
  SyntheticOptions o;
  o.seed = 2;
  o.batches_per_task = 1;
  o.eval_per_task = 2000;  // about 1000 per class
  const SyntheticStream s = build_synthetic(o);
  for (std::size_t t = 0; t < 2; ++t) {
    const Examples& ev = s.stream.tasks[t].eval;
    for (int cls : s.stream.tasks[t].classes) {
      std::vector<double> sum(o.dim, 0.0);
      std::size_t n = 0;
      for (std::size_t r = 0; r < ev.size(); ++r) {
        if (ev.labels[r] != cls) continue;
        ++n;
        for (std::size_t k = 0; k < o.dim; ++k) sum[k] += ev.inputs(r, k);
      }
      CHECK(n > 900);
      double worst = 0.0;
      for (std::size_t k = 0; k < o.dim; ++k)
        worst = std::max(worst, std::abs(sum[k] / n - s.cluster_means(static_cast<std::size_t>(cls), k)));
      CHECK(worst < 0.5 * o.sigma);
    }
  }
}

TEST_CASE("a fresh classifier learns each synthetic task quickly") {
  SyntheticOptions o;
  o.seed = 3;
  o.batches_per_task = 199;
  const SyntheticStream s = build_synthetic(o);
  MobConfig c;
  for (const Task& task : s.stream.tasks) {
    ExpertAgent a = ExpertAgent::create(0, c.model_spec(o.dim, 10, 0), c);
    for (const Batch& b : task.batches) train_winner(a, b.examples, c);
    const auto pred = predict(a.spec, a.params, task.eval.inputs);
    CHECK(accuracy(pred, task.eval.labels) >= 0.99);
  }
}

TEST_CASE("official MNIST training images hold 60000 examples") {
  const auto dir = resolve_data_dir(std::nullopt);
  if (!dir) {
    MESSAGE("MOB_DATA_DIR not set; skipping");
    return;
  }
  fs::path p = *dir / "train-images-idx3-ubyte";
  if (!fs::exists(p)) p += ".gz";
  const IdxFile idx = read_idx(p);
  CHECK(idx.is_images());
  CHECK(idx.count() == 60000);
  CHECK(idx.dims == std::vector<std::uint32_t>{60000, 28, 28});
}
