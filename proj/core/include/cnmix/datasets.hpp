#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnmix/data.hpp"

namespace cnmix::datasets {

// In-memory dataset: raw byte pixels, labels, and the per-channel
// normalization statistics computed from the training split at load time.
struct Dataset {
  std::string name;
  int num_classes = 0;
  int channels = 3, height = 32, width = 32;

  std::vector<std::uint8_t> train_pixels; // n * c * h * w, planes per sample
  std::vector<int> train_labels;
  std::vector<std::uint8_t> test_pixels;
  std::vector<int> test_labels;

  std::array<double, 3> mean{};   // of pixels scaled to [0, 1]
  std::array<double, 3> stddev{};

  int train_size() const { return static_cast<int>(train_labels.size()); }
  int test_size() const { return static_cast<int>(test_labels.size()); }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }

  // Materializes a normalized float batch for the given sample indices.
  ImageBatch make_batch(bool train_split, std::span<const int> indices) const;

  // Inverse of the normalization applied by make_batch, back to [0, 1].
  float denormalize(float value, int channel) const;

  void compute_normalization();
};

// Raw contents of one CIFAR-style binary file: records of
// label_bytes + 3072 pixel bytes.
struct CifarRecords {
  int label_bytes = 1;
  std::vector<std::uint8_t> raw; // concatenated records, exactly as on disk
  int count() const {
    return static_cast<int>(raw.size() / (static_cast<std::size_t>(label_bytes) + 3072));
  }
};

// Reads one file and validates its length is a whole number of records; when
// expected_records > 0 the exact byte count is enforced. Errors name the
// expected byte count.
CifarRecords read_cifar_file(const std::string& path, int label_bytes,
                             int expected_records = 0);
void write_cifar_file(const std::string& path, const CifarRecords& records);

// dir must contain data_batch_1.bin .. data_batch_5.bin and test_batch.bin,
// each exactly 10,000 records of 3,073 bytes.
Dataset read_cifar10(const std::string& dir);

// dir must contain train.bin (50,000 records) and test.bin (10,000 records)
// of 3,074 bytes each: coarse label byte (ignored), fine label byte, pixels.
Dataset read_cifar100(const std::string& dir);

// Procedural 32x32x3 textured-shape classes; deterministic per seed, labels
// balanced within one sample per class. difficulty in (0, ~2] scales noise
// and intra-class jitter.
Dataset make_synthetic(int num_classes, int n_train, int n_test, std::uint64_t seed,
                       double difficulty = 1.0);

// Writes a split in the CIFAR-10 single-label record layout.
void export_cifar10_layout(const Dataset& ds, bool train_split,
                           const std::string& path);

// Deterministic shuffled index batches for one epoch; a final batch smaller
// than two samples is dropped.
std::vector<std::vector<int>> shuffled_batches(int dataset_size, int batch_size,
                                               std::uint64_t seed, int epoch);

} // namespace cnmix::datasets
