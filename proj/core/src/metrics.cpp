#include "cnmix/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cnmix::trainer {

MetricsCsv::MetricsCsv(const std::string& path, bool append) : path_(path) {
  if (append) {
    std::ifstream probe(path_);
    if (probe.good()) return;
  }
  std::ofstream out(path_, std::ios::trunc);
  if (!out.good())
    throw std::runtime_error("cannot open metrics log '" + path_ + "' for writing");
  out << kMetricsHeader << "\n";
}

void MetricsCsv::write(const MetricRow& r) {
  std::ofstream out(path_, std::ios::app);
  if (!out.good()) throw std::runtime_error("cannot append to metrics log '" + path_ + "'");
  char line[512];
  std::snprintf(line, sizeof(line),
                "%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g", r.epoch, r.peer,
                r.ce, r.dml, r.mmd, r.pt, r.total, r.train_acc, r.test_acc, r.lr);
  out << line << "\n";
}

std::vector<MetricRow> MetricsCsv::read(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open metrics log '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader)
    throw std::runtime_error("'" + path + "': unexpected metrics header");

  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricRow r;
    std::istringstream ss(line);
    char comma;
    ss >> r.epoch >> comma >> r.peer >> comma >> r.ce >> comma >> r.dml >> comma >>
        r.mmd >> comma >> r.pt >> comma >> r.total >> comma >> r.train_acc >> comma >>
        r.test_acc >> comma >> r.lr;
    if (ss.fail()) throw std::runtime_error("'" + path + "': malformed metrics row");
    rows.push_back(r);
  }
  return rows;
}

} // namespace cnmix::trainer
