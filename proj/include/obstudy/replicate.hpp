#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace obstudy {

struct Draw {
  double estimate = 0.0;
  double truth = 0.0;
  std::optional<double> std_error;
};

/// Everything one replication produced, keyed by estimator name. An
/// estimator that failed appears in `errors` instead of `draws`.
struct ReplicationOutcome {
  std::map<std::string, Draw> draws;
  std::map<std::string, std::string> errors;
};

using Recipe = std::function<ReplicationOutcome(std::uint64_t seed)>;

struct ReplicationRecord {
  int replication = 0;
  std::uint64_t seed = 0;
  ReplicationOutcome outcome;
};

struct EstimatorSummary {
  std::string estimator;
  int n_ok = 0;
  int n_failed = 0;
  double mean = 0.0;
  double sd = 0.0;
  double mean_truth = 0.0;
  double bias = 0.0;
  double mc_se = 0.0;  // Monte-Carlo SE of the bias
  std::optional<double> coverage;  // share of nominal 95% intervals covering the truth

  nlohmann::json to_json() const;
};

struct ReplicationRun {
  int replications = 0;
  std::uint64_t base_seed = 0;
  std::string generator;
  std::vector<ReplicationRecord> records;  // ordered by replication index
  std::map<std::string, EstimatorSummary> summary;

  const EstimatorSummary& at(const std::string& estimator) const;
  /// Long format: replication,seed,estimator,estimate,truth,std_error,error
  std::string to_csv() const;
  nlohmann::json summary_json() const;
};

/// Runs replication r = 1..R with seed base_seed + r. Replications are
/// independent and run on `threads` workers (0 = hardware concurrency); the
/// result does not depend on the thread count.
ReplicationRun replicate(const Recipe& recipe, int replications, std::uint64_t base_seed, unsigned threads = 0);

/// Builds a recipe from a JSON study description:
///   {"science": ScienceSpec, "mechanism": MechanismSpec,
///    "noncompliance": NoncomplianceSpec (optional, switches to an encouragement study),
///    "analysis": {"score": "fitted" | "true" | <covariate>, "model": ModelSpec,
///                 "method": "quantile" | "width", "k": 5, "estimators": [...]}}
/// Estimators: crude, stratified (plain studies); itt, cace, cace_overall (encouragement).
Recipe study_recipe(const nlohmann::json& study);

}  // namespace obstudy
