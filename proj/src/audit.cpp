#include "obstudy/audit.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include "obstudy/error.hpp"

namespace obstudy {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::design: return "design";
    case Phase::frozen: return "frozen";
    case Phase::analysis: return "analysis";
  }
  return "design";
}

Phase phase_from_string(std::string_view text) {
  if (text == "design") return Phase::design;
  if (text == "frozen") return Phase::frozen;
  if (text == "analysis") return Phase::analysis;
  fail(ErrorKind::schema, "unknown phase '" + std::string(text) + "'");
}

std::string_view to_string(OutcomeAccess access) {
  switch (access) {
    case OutcomeAccess::none: return "none";
    case OutcomeAccess::granted: return "granted";
    case OutcomeAccess::refused: return "refused";
  }
  return "none";
}

nlohmann::json AuditRecord::to_json() const {
  return {{"timestamp", timestamp},
          {"command", command},
          {"input_digests", input_digests},
          {"output_digests", output_digests},
          {"phase", std::string(to_string(phase))},
          {"outcome_access", std::string(to_string(outcome_access))},
          {"violation", violation},
          {"exit_code", exit_code},
          {"note", note}};
}

AuditRecord AuditRecord::from_json(const nlohmann::json& j) {
  AuditRecord r;
  r.timestamp = j.at("timestamp").get<std::string>();
  r.command = j.at("command").get<std::vector<std::string>>();
  r.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
  r.output_digests = j.at("output_digests").get<std::map<std::string, std::string>>();
  r.phase = phase_from_string(j.at("phase").get<std::string>());
  auto access = j.at("outcome_access").get<std::string>();
  r.outcome_access = access == "granted"   ? OutcomeAccess::granted
                     : access == "refused" ? OutcomeAccess::refused
                                           : OutcomeAccess::none;
  r.violation = j.at("violation").get<bool>();
  r.exit_code = j.at("exit_code").get<int>();
  r.note = j.value("note", std::string());
  return r;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AuditLog AuditLog::open(const std::filesystem::path& path) {
  AuditLog log;
  log.path_ = path;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      log.records_.push_back(AuditRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, "corrupt audit log '" + path.string() + "': " + e.what());
    }
  }
  return log;
}

void AuditLog::append(AuditRecord record) {
  if (record.timestamp.empty()) record.timestamp = utc_timestamp();
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    if (!out) fail(ErrorKind::io, "cannot append to audit log '" + path_.string() + "'");
    out << record.to_json().dump() << '\n';
  }
  records_.push_back(std::move(record));
}

std::size_t AuditLog::violations() const {
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [](const AuditRecord& r) { return r.violation; }));
}

}  // namespace obstudy
