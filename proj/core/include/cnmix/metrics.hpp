#pragma once

#include <string>
#include <vector>

namespace cnmix::trainer {

// One row of the per-epoch, per-peer training log.
struct MetricRow {
  int epoch = 0;
  int peer = 0;
  double ce = 0, dml = 0, mmd = 0, pt = 0, total = 0;
  double train_acc = 0, test_acc = 0;
  double lr = 0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,peer,ce,dml,mmd,pt,total,train_acc,test_acc,lr";

// Append-only CSV writer; opening without append truncates and writes the
// header once.
class MetricsCsv {
public:
  MetricsCsv(const std::string& path, bool append);
  void write(const MetricRow& row);
  const std::string& path() const { return path_; }

  static std::vector<MetricRow> read(const std::string& path);

private:
  std::string path_;
};

} // namespace cnmix::trainer
