#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "obstudy/audit.hpp"
#include "obstudy/protocol.hpp"
#include "obstudy/table.hpp"

namespace obstudy {

class SealedOutcomes;

struct Quarantine;

Quarantine quarantine_outcomes(const StudyTable& table);

std::vector<Column> unseal_outcomes(const SealedOutcomes& sealed, const DesignProtocol& protocol, AuditRecord& record);
std::vector<Column> unseal_outcomes(const SealedOutcomes& sealed, const DesignProtocol& protocol, AuditLog& log);

/// Outcome columns held back during design. The canonical payload (column
/// name, kind, then one decimal cell per line in row order) has no accessor;
/// the only way back to the values is unseal_outcomes with a frozen protocol.
class SealedOutcomes {
 public:
  const std::vector<std::string>& column_names() const { return column_names_; }
  const std::string& payload_digest() const { return digest_; }
  const std::string& sealed_at() const { return sealed_at_; }

  /// Persisted form for a workspace directory.
  nlohmann::json to_json() const;
  static SealedOutcomes from_json(const nlohmann::json& j);

 private:
  friend Quarantine quarantine_outcomes(const StudyTable& table);
  friend std::vector<Column> unseal_outcomes(const SealedOutcomes&, const DesignProtocol&, AuditRecord&);

  std::vector<std::string> column_names_;
  std::string payload_;
  std::string digest_;
  std::string sealed_at_;
};

struct Quarantine {
  StudyTable design_table;
  SealedOutcomes sealed;
};

/// Canonical serialization used for the seal digest.
std::string canonical_columns(const std::vector<const Column*>& columns);

}  // namespace obstudy
