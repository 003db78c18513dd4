#include "obstudy/protocol.hpp"

#include "obstudy/digest.hpp"
#include "obstudy/error.hpp"

namespace obstudy {

void DesignProtocol::require_mutable() const {
  if (frozen_) fail(ErrorKind::protocol_frozen, "design protocol is frozen (digest " + digest_ + ")");
}

void DesignProtocol::set_model_spec(ModelSpec spec) {
  require_mutable();
  model_spec_ = std::move(spec);
}

void DesignProtocol::set_subclass_plan(SubclassPlan plan) {
  require_mutable();
  if (plan.k < 1) fail(ErrorKind::domain, "subclass plan needs k >= 1");
  plan_ = std::move(plan);
}

void DesignProtocol::set_thresholds(BalanceThresholds thresholds) {
  require_mutable();
  thresholds_ = std::move(thresholds);
}

void DesignProtocol::freeze(std::vector<int> labels) {
  require_mutable();
  if (labels.empty()) fail(ErrorKind::domain, "cannot freeze a protocol without subclass labels");
  labels_ = std::move(labels);
  frozen_ = true;
  digest_ = compute_digest();
}

std::string DesignProtocol::compute_digest() const {
  nlohmann::json canonical{{"model_spec", model_spec_.to_json()},
                           {"subclass_plan",
                            {{"method", std::string(to_string(plan_.method))}, {"k", plan_.k}, {"score", plan_.score}}},
                           {"labels", labels_}};
  return sha256_hex(canonical.dump());
}

nlohmann::json DesignProtocol::to_json() const {
  return {{"model_spec", model_spec_.to_json()},
          {"subclass_plan", {{"method", std::string(to_string(plan_.method))}, {"k", plan_.k}, {"score", plan_.score}}},
          {"balance_thresholds", thresholds_.to_json()},
          {"labels", labels_},
          {"frozen", frozen_},
          {"freeze_digest", digest_}};
}

DesignProtocol DesignProtocol::from_json(const nlohmann::json& j) {
  DesignProtocol p;
  try {
    p.model_spec_ = ModelSpec::from_json(j.at("model_spec"));
    const auto& plan = j.at("subclass_plan");
    p.plan_.method = subclass_method_from_string(plan.at("method").get<std::string>());
    p.plan_.k = plan.at("k").get<int>();
    p.plan_.score = plan.value("score", p.plan_.score);
    p.thresholds_ = BalanceThresholds::from_json(j.value("balance_thresholds", nlohmann::json::object()));
    p.labels_ = j.at("labels").get<std::vector<int>>();
    p.frozen_ = j.at("frozen").get<bool>();
    p.digest_ = j.value("freeze_digest", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, std::string("malformed design protocol: ") + e.what());
  }
  if (p.frozen_ && p.compute_digest() != p.digest_)
    fail(ErrorKind::tamper, "frozen protocol contents do not match its freeze digest");
  return p;
}

}  // namespace obstudy
