#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace obstudy {

enum class Role { covariate, treatment, intermediate, outcome, unit_id };
enum class Kind { numeric, binary, categorical };

std::string_view to_string(Role role);
std::string_view to_string(Kind kind);
Role role_from_string(std::string_view text);
Kind kind_from_string(std::string_view text);

/// One typed, role-tagged column. Categorical cells are stored as indices
/// into `levels`, which is always sorted so that the first level is the
/// reference level for dummy coding.
struct Column {
  std::string name;
  Role role = Role::covariate;
  Kind kind = Kind::numeric;
  std::vector<double> values;
  std::vector<std::string> levels;

  std::size_t size() const { return values.size(); }
  /// Canonical decimal text for cell `i` (shortest round-trip form).
  std::string cell_text(std::size_t i) const;
  bool is_constant() const;
};

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

/// Immutable table of study units. Construction validates every invariant:
/// exactly one binary treatment column, equal column lengths, binary cells in
/// {0,1}, categorical codes within their level list.
class StudyTable {
 public:
  StudyTable(std::string name, std::vector<Column> columns);

  const std::string& name() const { return name_; }
  std::size_t n_units() const { return n_units_; }
  const std::vector<Column>& columns() const { return columns_; }

  const Column& column(std::string_view name) const;
  const Column* find(std::string_view name) const;
  const Column& treatment() const;
  std::vector<const Column*> with_role(Role role) const;
  bool has_outcomes() const { return !with_role(Role::outcome).empty(); }

  /// Treatment column as 0/1 integers.
  std::vector<int> treatment_indicator() const;

  StudyTable select_rows(std::span<const std::size_t> rows) const;
  StudyTable without_role(Role role) const;
  StudyTable with_columns(std::vector<Column> extra) const;

  /// Design-phase operations call this; a table still carrying outcome
  /// columns is a blinding violation.
  void require_no_outcomes(std::string_view operation) const;

 private:
  std::string name_;
  std::size_t n_units_ = 0;
  std::vector<Column> columns_;
};

struct ColumnSchema {
  std::string name;
  Role role = Role::covariate;
  Kind kind = Kind::numeric;
  std::vector<std::string> levels;  // optional explicit level list
};

/// Role map applied at ingest. Columns present in the file but absent from
/// the schema are dropped.
struct Schema {
  std::string name = "study";
  std::vector<ColumnSchema> columns;

  static Schema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// RFC-4180 record splitting (quoted fields, doubled quotes, CRLF).
std::vector<std::vector<std::string>> read_csv_records(std::istream& in);
std::string csv_escape(std::string_view field);

StudyTable parse_csv(std::istream& in, const Schema& schema);
StudyTable load_csv(const std::filesystem::path& path, const Schema& schema);
void write_csv(std::ostream& out, const StudyTable& table);
void save_csv(const std::filesystem::path& path, const StudyTable& table);

/// Schema describing an existing table (used when persisting a workspace).
Schema schema_of(const StudyTable& table);

}  // namespace obstudy
