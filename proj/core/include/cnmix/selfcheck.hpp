#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cnmix::selfcheck {

// Self-contained verification suites. Every numeric check here is computed
// by its own direct implementation (plain loops, no shared code with the
// library paths under test); the library must agree with those references.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Losses against direct-summation references on random small instances.
std::vector<CheckResult> loss_oracle_suite(int instances = 200, double tol = 1e-10,
                                           std::uint64_t seed = 2024);

// Analytic loss gradients against central finite differences.
std::vector<CheckResult> gradient_suite(int instances = 50, double tol = 1e-4,
                                        std::uint64_t seed = 77);

// Mixing invariants over random plans at 32x32: pixel provenance, the mask
// area bound, simplex labels, cross-peer label identity, seed determinism.
std::vector<CheckResult> mixing_suite(int plans = 1000, std::uint64_t seed = 99);

// Uniformity of the mixing-ratio sampler: moments and a KS statistic.
std::vector<CheckResult> beta_uniformity_suite(std::uint64_t seed = 5);

// Binary-format fidelity: record-size arithmetic and decode/encode
// round-trips through files under tmp_dir.
std::vector<CheckResult> format_suite(const std::string& tmp_dir);

bool all_pass(const std::vector<CheckResult>& results);

} // namespace cnmix::selfcheck
