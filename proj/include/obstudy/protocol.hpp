#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "obstudy/balance.hpp"
#include "obstudy/model_spec.hpp"
#include "obstudy/subclass.hpp"

namespace obstudy {

struct SubclassPlan {
  SubclassMethod method = SubclassMethod::equal_frequency;
  int k = 5;
  std::string score = "linear_propensity_score";
};

/// The design decisions made while outcomes are sealed. Once frozen every
/// mutator throws; the freeze digest covers (model spec, subclass plan,
/// assignment labels) and is recomputed on load.
class DesignProtocol {
 public:
  void set_model_spec(ModelSpec spec);
  void set_subclass_plan(SubclassPlan plan);
  void set_thresholds(BalanceThresholds thresholds);
  void freeze(std::vector<int> labels);

  const ModelSpec& model_spec() const { return model_spec_; }
  const SubclassPlan& subclass_plan() const { return plan_; }
  const BalanceThresholds& thresholds() const { return thresholds_; }
  const std::vector<int>& labels() const { return labels_; }
  bool frozen() const { return frozen_; }
  const std::string& freeze_digest() const { return digest_; }

  /// Digest of the current contents (lowercase hex SHA-256).
  std::string compute_digest() const;

  nlohmann::json to_json() const;
  static DesignProtocol from_json(const nlohmann::json& j);

 private:
  void require_mutable() const;

  ModelSpec model_spec_;
  SubclassPlan plan_;
  BalanceThresholds thresholds_;
  std::vector<int> labels_;
  bool frozen_ = false;
  std::string digest_;
};

}  // namespace obstudy
