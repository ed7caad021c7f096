#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bdlab/stats.hpp"

namespace bdlab {

/// full: the acceptance sizes. quick: the same checks at smoke-test sizes,
/// used by the reproducibility check and the unit tests.
enum class Profile { full, quick };

struct AcceptanceOptions {
  Profile profile = Profile::full;
  std::uint64_t master_seed = 20'240'601;
  int workers = 1;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string summary;  ///< one line, no timing (timing is not reproducible)
  std::vector<Verdict> verdicts;
  /// CSV data behind the verdicts, by file name.
  std::map<std::string, std::string> files;
  double seconds = 0.0;
};

/// Criteria 1 to 13 run in process; 14 compares two `verify` runs and lives
/// in the acceptance driver.
inline constexpr int kInProcessCriteria = 13;

/// Throws std::out_of_range for an id outside 1..13.
CriterionResult run_criterion(int id, const AcceptanceOptions& options);

/// "criterion  7 PASS  <name>: <summary>".
std::string criterion_line(const CriterionResult& result);

/// Writes cNN_<file> for every data file plus cNN_verdicts.json.
void write_criterion(const CriterionResult& result, const std::filesystem::path& dir);

}  // namespace bdlab
