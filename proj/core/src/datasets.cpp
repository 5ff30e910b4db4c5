#include "cnmix/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "cnmix/rng.hpp"

namespace cnmix::datasets {

namespace {

constexpr std::size_t kPixelBytes = 3072; // 3 x 32 x 32

void require(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '" + path + "'");
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(len));
  in.read(reinterpret_cast<char*>(bytes.data()), len);
  require(in.good(), "failed reading '" + path + "'");
  return bytes;
}

void append_records(const CifarRecords& rec, int fine_label_index, int num_classes,
                    std::vector<std::uint8_t>& pixels, std::vector<int>& labels,
                    const std::string& path) {
  const std::size_t record = static_cast<std::size_t>(rec.label_bytes) + kPixelBytes;
  for (int i = 0; i < rec.count(); ++i) {
    const std::uint8_t* r = rec.raw.data() + static_cast<std::size_t>(i) * record;
    const int label = r[fine_label_index];
    require(label < num_classes, "label " + std::to_string(label) + " out of range in '" +
                                     path + "'");
    labels.push_back(label);
    pixels.insert(pixels.end(), r + rec.label_bytes, r + record);
  }
}

} // namespace

CifarRecords read_cifar_file(const std::string& path, int label_bytes,
                             int expected_records) {
  CifarRecords rec;
  rec.label_bytes = label_bytes;
  rec.raw = read_all_bytes(path);
  const std::size_t record = static_cast<std::size_t>(label_bytes) + kPixelBytes;
  if (expected_records > 0) {
    const std::size_t expected = record * static_cast<std::size_t>(expected_records);
    require(rec.raw.size() == expected,
            "'" + path + "': expected " + std::to_string(expected) + " bytes (" +
                std::to_string(expected_records) + " records of " +
                std::to_string(record) + " bytes), got " +
                std::to_string(rec.raw.size()));
  } else {
    require(rec.raw.size() % record == 0,
            "'" + path + "': expected a multiple of " + std::to_string(record) +
                " bytes, got " + std::to_string(rec.raw.size()));
  }
  return rec;
}

void write_cifar_file(const std::string& path, const CifarRecords& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(records.raw.data()),
            static_cast<std::streamsize>(records.raw.size()));
  require(out.good(), "failed writing '" + path + "'");
}

Dataset read_cifar10(const std::string& dir) {
  Dataset ds;
  ds.name = "cifar10";
  ds.num_classes = 10;
  for (int f = 1; f <= 5; ++f) {
    const std::string path = dir + "/data_batch_" + std::to_string(f) + ".bin";
    const CifarRecords rec = read_cifar_file(path, 1, 10000);
    append_records(rec, 0, 10, ds.train_pixels, ds.train_labels, path);
  }
  const std::string test_path = dir + "/test_batch.bin";
  const CifarRecords rec = read_cifar_file(test_path, 1, 10000);
  append_records(rec, 0, 10, ds.test_pixels, ds.test_labels, test_path);
  ds.compute_normalization();
  return ds;
}

Dataset read_cifar100(const std::string& dir) {
  Dataset ds;
  ds.name = "cifar100";
  ds.num_classes = 100;
  const std::string train_path = dir + "/train.bin";
  const CifarRecords train = read_cifar_file(train_path, 2, 50000);
  append_records(train, 1, 100, ds.train_pixels, ds.train_labels, train_path);
  const std::string test_path = dir + "/test.bin";
  const CifarRecords test = read_cifar_file(test_path, 2, 10000);
  append_records(test, 1, 100, ds.test_pixels, ds.test_labels, test_path);
  ds.compute_normalization();
  return ds;
}

void export_cifar10_layout(const Dataset& ds, bool train_split,
                           const std::string& path) {
  const std::vector<std::uint8_t>& pixels = train_split ? ds.train_pixels : ds.test_pixels;
  const std::vector<int>& labels = train_split ? ds.train_labels : ds.test_labels;
  require(ds.sample_size() == kPixelBytes,
          "export_cifar10_layout: only 3x32x32 datasets fit the record layout");
  require(ds.num_classes <= 256, "export_cifar10_layout: labels exceed one byte");

  CifarRecords rec;
  rec.label_bytes = 1;
  rec.raw.reserve(labels.size() * (1 + kPixelBytes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    rec.raw.push_back(static_cast<std::uint8_t>(labels[i]));
    const std::uint8_t* p = pixels.data() + i * kPixelBytes;
    rec.raw.insert(rec.raw.end(), p, p + kPixelBytes);
  }
  write_cifar_file(path, rec);
}

void Dataset::compute_normalization() {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < train_labels.size(); ++i) {
      const std::uint8_t* p = train_pixels.data() + i * sample_size() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = p[k] / 255.0;
        sum += v;
        sq += v * v;
        ++count;
      }
    }
    const double m = count ? sum / count : 0.0;
    const double var = count ? std::max(sq / count - m * m, 0.0) : 1.0;
    mean[static_cast<std::size_t>(c)] = m;
    stddev[static_cast<std::size_t>(c)] = std::max(std::sqrt(var), 1e-6);
  }
}

ImageBatch Dataset::make_batch(bool train_split, std::span<const int> indices) const {
  const std::vector<std::uint8_t>& pixels = train_split ? train_pixels : test_pixels;
  const std::vector<int>& labels = train_split ? train_labels : test_labels;

  ImageBatch b;
  b.n = static_cast<int>(indices.size());
  b.channels = channels;
  b.height = height;
  b.width = width;
  b.num_classes = num_classes;
  b.pixels.resize(static_cast<std::size_t>(b.n) * sample_size());
  b.labels.resize(static_cast<std::size_t>(b.n));

  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int i = 0; i < b.n; ++i) {
    const int src = indices[static_cast<std::size_t>(i)];
    if (src < 0 || src >= static_cast<int>(labels.size()))
      throw std::invalid_argument("make_batch: index out of range");
    b.labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
    const std::uint8_t* sp = pixels.data() + static_cast<std::size_t>(src) * sample_size();
    float* dp = b.sample(i);
    for (int c = 0; c < channels; ++c) {
      const double m = mean[static_cast<std::size_t>(c)];
      const double inv = 1.0 / stddev[static_cast<std::size_t>(c)];
      for (std::size_t k = 0; k < plane; ++k)
        dp[c * plane + k] =
            static_cast<float>((sp[c * plane + k] / 255.0 - m) * inv);
    }
  }
  return b;
}

float Dataset::denormalize(float value, int channel) const {
  return static_cast<float>(value * stddev[static_cast<std::size_t>(channel)] +
                            mean[static_cast<std::size_t>(channel)]);
}

// ---------------------------------------------------------------------------
// synthetic data

namespace {

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

bool inside_shape(int shape_id, double u, double v, double s) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape_id) {
    case 0: return u * u + v * v <= s * s;
    case 1: return std::max(au, av) <= 0.9 * s;
    case 2: return au + av <= 1.25 * s;
    case 3: {
      const double r2 = u * u + v * v;
      return r2 <= s * s && r2 >= 0.45 * s * s;
    }
    default: return (au <= 0.4 * s || av <= 0.4 * s) && std::max(au, av) <= s;
  }
}

double texture_value(int texture_id, double u, double v, double phase) {
  switch (texture_id) {
    case 0: return 0.5 + 0.5 * std::sin(1.3 * u + phase);
    case 1: return 0.5 + 0.5 * std::sin(1.3 * v + phase);
    case 2: return 0.5 + 0.5 * std::sin(0.9 * u + phase) * std::sin(0.9 * v + phase);
    default: return 1.0;
  }
}

void render_sample(int label, double difficulty, Rng& rng, std::uint8_t* out) {
  const int shape_id = label % 5;
  const int texture_id = (label / 5) % 4;
  const double hue = 0.61803398875 * label + 0.13;

  const double jitter = 2.0 + 3.0 * difficulty;
  const double cx = 16.0 + rng.uniform(-jitter, jitter);
  const double cy = 16.0 + rng.uniform(-jitter, jitter);
  const double s = rng.uniform(6.0, 11.0);
  const double theta = rng.uniform(-0.4, 0.4) * difficulty;
  const double phase = rng.uniform(0.0, 6.28318530718);
  const double bg_base = rng.uniform(0.15, 0.5);
  const double bg_dir = rng.uniform(0.0, 6.28318530718);
  const double bg_amp = 0.2;
  const double tint[3] = {rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08),
                          rng.uniform(-0.08, 0.08)};
  // class hue is a weak prior only; shape and texture carry the label
  const double hue_jitter = rng.uniform(-1.0, 1.0) * (0.04 + 0.06 * difficulty);
  const double sat = rng.uniform(0.55, 0.85);
  const double val = rng.uniform(0.65, 1.0);
  const double sigma = 0.03 + 0.03 * difficulty;

  // colored occluder patches land on top of everything; robustness to them
  // is a big part of what separates the classes
  struct Patch {
    int x0, y0, sz;
    double col[3];
  };
  Patch patches[2];
  const int num_patches = 1 + (rng.bernoulli(0.3) ? 1 : 0);
  for (int pi = 0; pi < num_patches; ++pi) {
    patches[pi].sz = 5 + static_cast<int>(rng.uniform_int(6));
    patches[pi].x0 = static_cast<int>(rng.uniform_int(32 - patches[pi].sz));
    patches[pi].y0 = static_cast<int>(rng.uniform_int(32 - patches[pi].sz));
    for (double& c : patches[pi].col) c = rng.uniform(0.0, 1.0);
  }

  double rgb[3];
  hsv_to_rgb(hue + hue_jitter, sat, val, rgb);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double gx = std::cos(bg_dir), gy = std::sin(bg_dir);

  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double u = ct * (x - cx) + st * (y - cy);
      const double v = -st * (x - cx) + ct * (y - cy);
      const bool inside = inside_shape(shape_id, u, v, s);
      const double grad = bg_amp * ((gx * x + gy * y) / 32.0);
      double tex = 1.0;
      if (inside) tex = texture_value(texture_id, u, v, phase);
      const Patch* covering = nullptr;
      for (int pi = 0; pi < num_patches; ++pi) {
        const Patch& pa = patches[pi];
        if (x >= pa.x0 && x < pa.x0 + pa.sz && y >= pa.y0 && y < pa.y0 + pa.sz)
          covering = &pa;
      }
      for (int c = 0; c < 3; ++c) {
        double p = bg_base + grad + tint[c];
        if (inside) p = 0.25 * p + 0.75 * rgb[c] * (0.35 + 0.65 * tex);
        if (covering) p = covering->col[c];
        p += sigma * rng.normal();
        p = std::clamp(p, 0.0, 1.0);
        out[c * 1024 + y * 32 + x] = static_cast<std::uint8_t>(std::lround(p * 255.0));
      }
    }
  }
}

void make_split(int num_classes, int count, std::uint64_t seed, int split_tag,
                double difficulty, std::vector<std::uint8_t>& pixels,
                std::vector<int>& labels) {
  const SeedTree tree(seed);
  // balanced labels: i % K assigned through a shuffle of the index set
  Rng label_rng = tree.stream(seed_tag::synth, static_cast<std::uint64_t>(split_tag), 0);
  const std::vector<int> order = label_rng.permutation(count);
  labels.assign(static_cast<std::size_t>(count), 0);
  for (int i = 0; i < count; ++i)
    labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % num_classes;

  pixels.resize(static_cast<std::size_t>(count) * 3072);
  for (int i = 0; i < count; ++i) {
    Rng rng = tree.stream(seed_tag::synth, static_cast<std::uint64_t>(split_tag),
                          static_cast<std::uint64_t>(i) + 1);
    render_sample(labels[static_cast<std::size_t>(i)], difficulty, rng,
                  pixels.data() + static_cast<std::size_t>(i) * 3072);
  }

  // annotation noise on the training split only: the labels of a difficulty-
  // scaled subset rotate among themselves, which corrupts them while keeping
  // the per-class counts exactly balanced
  if (split_tag == 0) {
    const double rate = std::clamp(0.35 * difficulty, 0.0, 0.45);
    const int corrupt = static_cast<int>(std::lround(rate * count));
    if (corrupt >= 2) {
      Rng noise_rng =
          tree.stream(seed_tag::synth, static_cast<std::uint64_t>(split_tag), 0xC0);
      const std::vector<int> perm = noise_rng.permutation(count);
      const int first_label = labels[static_cast<std::size_t>(perm[0])];
      for (int i = 0; i + 1 < corrupt; ++i)
        labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
            labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i + 1)])];
      labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(corrupt - 1)])] =
          first_label;
    }
  }
}

} // namespace

Dataset make_synthetic(int num_classes, int n_train, int n_test, std::uint64_t seed,
                       double difficulty) {
  if (num_classes < 2)
    throw std::invalid_argument("make_synthetic: need at least two classes");
  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = num_classes;
  make_split(num_classes, n_train, seed, 0, difficulty, ds.train_pixels, ds.train_labels);
  make_split(num_classes, n_test, seed, 1, difficulty, ds.test_pixels, ds.test_labels);
  ds.compute_normalization();
  return ds;
}

std::vector<std::vector<int>> shuffled_batches(int dataset_size, int batch_size,
                                               std::uint64_t seed, int epoch) {
  if (batch_size < 2)
    throw std::invalid_argument("shuffled_batches: batch_size must be >= 2");
  Rng rng = SeedTree(seed).stream(seed_tag::shuffle, static_cast<std::uint64_t>(epoch));
  const std::vector<int> order = rng.permutation(dataset_size);

  std::vector<std::vector<int>> batches;
  for (int start = 0; start < dataset_size; start += batch_size) {
    const int end = std::min(start + batch_size, dataset_size);
    if (end - start < 2) break; // a lone trailing sample cannot be mixed
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

} // namespace cnmix::datasets
