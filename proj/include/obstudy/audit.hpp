#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace obstudy {

enum class Phase { design, frozen, analysis };

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view text);

enum class OutcomeAccess { none, granted, refused };

std::string_view to_string(OutcomeAccess access);

struct AuditRecord {
  std::string timestamp;
  std::vector<std::string> command;
  std::map<std::string, std::string> input_digests;
  std::map<std::string, std::string> output_digests;
  Phase phase = Phase::design;
  OutcomeAccess outcome_access = OutcomeAccess::none;
  bool violation = false;
  int exit_code = 0;
  std::string note;

  nlohmann::json to_json() const;
  static AuditRecord from_json(const nlohmann::json& j);
};

/// UTC wall-clock time, ISO-8601 with seconds.
std::string utc_timestamp();

/// Append-only audit trail. When bound to a file (JSON Lines), every append
/// is written through immediately.
class AuditLog {
 public:
  AuditLog() = default;
  static AuditLog open(const std::filesystem::path& path);

  void append(AuditRecord record);
  const std::vector<AuditRecord>& records() const { return records_; }
  std::size_t violations() const;

 private:
  std::filesystem::path path_;
  std::vector<AuditRecord> records_;
};

}  // namespace obstudy
