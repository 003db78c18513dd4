#include "obstudy/quarantine.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "obstudy/digest.hpp"
#include "obstudy/error.hpp"

namespace obstudy {

std::string canonical_columns(const std::vector<const Column*>& columns) {
  std::ostringstream out;
  for (const Column* col : columns) {
    out << "column " << col->name << '\n' << "kind " << to_string(col->kind) << '\n';
    if (col->kind == Kind::categorical) {
      out << "levels";
      for (const auto& l : col->levels) out << '\t' << l;
      out << '\n';
    }
    out << "values " << col->size() << '\n';
    for (std::size_t i = 0; i < col->size(); ++i) out << col->cell_text(i) << '\n';
  }
  return out.str();
}

namespace {

std::vector<Column> parse_canonical(const std::string& payload) {
  std::istringstream in(payload);
  std::vector<Column> out;
  std::string line;
  auto expect = [&](std::string_view prefix) {
    if (!std::getline(in, line) || line.rfind(prefix, 0) != 0)
      fail(ErrorKind::tamper, "sealed payload is malformed (expected '" + std::string(prefix) + "')");
    return line.substr(prefix.size());
  };
  while (in.peek() != std::char_traits<char>::eof()) {
    Column col;
    col.role = Role::outcome;
    col.name = expect("column ");
    col.kind = kind_from_string(expect("kind "));
    if (col.kind == Kind::categorical) {
      std::string rest = expect("levels");
      std::istringstream ls(rest);
      std::string level;
      std::getline(ls, level, '\t');
      while (std::getline(ls, level, '\t')) col.levels.push_back(level);
    }
    std::size_t n = std::stoul(expect("values "));
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(in, line)) fail(ErrorKind::tamper, "sealed payload is truncated");
      if (col.kind == Kind::categorical) {
        auto it = std::find(col.levels.begin(), col.levels.end(), line);
        if (it == col.levels.end()) fail(ErrorKind::tamper, "sealed payload has an unknown level");
        col.values.push_back(static_cast<double>(it - col.levels.begin()));
      } else {
        double v = 0;
        auto res = std::from_chars(line.data(), line.data() + line.size(), v);
        if (res.ec != std::errc() || res.ptr != line.data() + line.size())
          fail(ErrorKind::tamper, "sealed payload has an unparseable value");
        col.values.push_back(v);
      }
    }
    out.push_back(std::move(col));
  }
  return out;
}

}  // namespace

Quarantine quarantine_outcomes(const StudyTable& table) {
  auto outcomes = table.with_role(Role::outcome);
  if (outcomes.empty()) fail(ErrorKind::nothing_to_seal, "table has no outcome-role columns to seal");
  SealedOutcomes sealed;
  for (const Column* c : outcomes) sealed.column_names_.push_back(c->name);
  sealed.payload_ = canonical_columns(outcomes);
  sealed.digest_ = sha256_hex(sealed.payload_);
  sealed.sealed_at_ = utc_timestamp();
  return {table.without_role(Role::outcome), std::move(sealed)};
}

std::vector<Column> unseal_outcomes(const SealedOutcomes& sealed, const DesignProtocol& protocol,
                                    AuditRecord& record) {
  if (!protocol.frozen()) {
    record.outcome_access = OutcomeAccess::refused;
    record.violation = true;
    fail(ErrorKind::blinding_violation, "outcomes requested before the design protocol was frozen");
  }
  if (sha256_hex(sealed.payload_) != sealed.digest_) {
    record.outcome_access = OutcomeAccess::refused;
    record.violation = true;
    fail(ErrorKind::tamper, "sealed outcome payload does not match its digest");
  }
  auto cols = parse_canonical(sealed.payload_);
  record.outcome_access = OutcomeAccess::granted;
  record.input_digests["sealed_outcomes"] = sealed.digest_;
  record.input_digests["protocol"] = protocol.freeze_digest();
  return cols;
}

std::vector<Column> unseal_outcomes(const SealedOutcomes& sealed, const DesignProtocol& protocol, AuditLog& log) {
  AuditRecord record;
  record.command = {"unseal"};
  record.phase = protocol.frozen() ? Phase::frozen : Phase::design;
  try {
    auto cols = unseal_outcomes(sealed, protocol, record);
    record.phase = Phase::analysis;
    log.append(record);
    return cols;
  } catch (const Error& e) {
    record.note = e.what();
    record.exit_code = 1;
    log.append(record);
    throw;
  }
}

nlohmann::json SealedOutcomes::to_json() const {
  return {{"column_names", column_names_}, {"payload_digest", digest_}, {"sealed_at", sealed_at_},
          {"payload", payload_}};
}

SealedOutcomes SealedOutcomes::from_json(const nlohmann::json& j) {
  SealedOutcomes s;
  try {
    s.column_names_ = j.at("column_names").get<std::vector<std::string>>();
    s.digest_ = j.at("payload_digest").get<std::string>();
    s.sealed_at_ = j.at("sealed_at").get<std::string>();
    s.payload_ = j.at("payload").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, std::string("malformed sealed outcomes: ") + e.what());
  }
  return s;
}

}  // namespace obstudy
