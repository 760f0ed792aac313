#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace attnflow::harness {

struct VerificationCheck {
  std::string name;
  std::string detail;   ///< short statement of what was measured
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;    ///< residual <= tolerance
};

struct VerificationReport {
  std::vector<VerificationCheck> checks;
  int passed = 0;
  int failed = 0;
  double worst_residual = 0.0;
  std::string worst_check;

  bool all_passed() const { return failed == 0; }
};

struct VerifySizes {
  int n = 8;
  int d = 20;
  int head_count = 2;
  int trials = 20;  ///< random-state count for the sampled identities
};

/// Runs the whole property suite — projection identities, energy-rate
/// oracles, threshold golden values, reduction consistency, the entropy
/// identity and the cross-head covariance law — and collects one
/// pass/fail line per check.
VerificationReport verify_all(std::uint64_t seed, const VerifySizes& sizes = {});

void to_json(nlohmann::json& j, const VerificationReport& report);
VerificationReport verification_report_from_json(const nlohmann::json& j);

}  // namespace attnflow::harness
