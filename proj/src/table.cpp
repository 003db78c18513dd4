#include "obstudy/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "obstudy/error.hpp"

namespace obstudy {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string location(std::size_t row, std::string_view column) {
  return "row " + std::to_string(row) + ", column '" + std::string(column) + "'";
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::covariate: return "covariate";
    case Role::treatment: return "treatment";
    case Role::intermediate: return "intermediate";
    case Role::outcome: return "outcome";
    case Role::unit_id: return "unit_id";
  }
  return "covariate";
}

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::numeric: return "numeric";
    case Kind::binary: return "binary";
    case Kind::categorical: return "categorical";
  }
  return "numeric";
}

Role role_from_string(std::string_view text) {
  if (text == "covariate") return Role::covariate;
  if (text == "treatment") return Role::treatment;
  if (text == "intermediate") return Role::intermediate;
  if (text == "outcome") return Role::outcome;
  if (text == "unit_id") return Role::unit_id;
  fail(ErrorKind::schema, "unknown column role '" + std::string(text) + "'");
}

Kind kind_from_string(std::string_view text) {
  if (text == "numeric") return Kind::numeric;
  if (text == "binary") return Kind::binary;
  if (text == "categorical") return Kind::categorical;
  fail(ErrorKind::schema, "unknown column kind '" + std::string(text) + "'");
}

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string Column::cell_text(std::size_t i) const {
  if (kind == Kind::categorical) return levels.at(static_cast<std::size_t>(values.at(i)));
  return format_number(values.at(i));
}

bool Column::is_constant() const {
  if (values.empty()) return true;
  return std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); });
}

StudyTable::StudyTable(std::string name, std::vector<Column> columns)
    : name_(std::move(name)), columns_(std::move(columns)) {
  if (columns_.empty()) fail(ErrorKind::schema, "study table has no columns");
  n_units_ = columns_.front().size();
  if (n_units_ == 0) fail(ErrorKind::schema, "study table has no units");

  std::set<std::string> seen;
  int n_treatment = 0;
  for (const auto& col : columns_) {
    if (!seen.insert(col.name).second)
      fail(ErrorKind::schema, "duplicate column '" + col.name + "'");
    if (col.size() != n_units_)
      fail(ErrorKind::schema, "column '" + col.name + "' has " + std::to_string(col.size()) +
                                  " values, expected " + std::to_string(n_units_));
    if (col.role == Role::treatment) {
      ++n_treatment;
      if (col.kind != Kind::binary)
        fail(ErrorKind::schema, "treatment column '" + col.name + "' must be binary");
    }
    for (std::size_t i = 0; i < col.size(); ++i) {
      double v = col.values[i];
      if (!std::isfinite(v))
        fail(ErrorKind::domain, "non-finite value at " + location(i + 1, col.name));
      if (col.kind == Kind::binary && v != 0.0 && v != 1.0)
        fail(ErrorKind::domain, "value outside {0,1} at " + location(i + 1, col.name));
      if (col.kind == Kind::categorical &&
          (v < 0 || v != std::floor(v) || v >= static_cast<double>(col.levels.size())))
        fail(ErrorKind::domain, "categorical code outside level list at " + location(i + 1, col.name));
    }
    if (col.kind == Kind::categorical && !std::is_sorted(col.levels.begin(), col.levels.end()))
      fail(ErrorKind::schema, "levels of '" + col.name + "' must be sorted");
  }
  if (n_treatment != 1)
    fail(ErrorKind::schema,
         "study table needs exactly one treatment column, found " + std::to_string(n_treatment));
}

const Column* StudyTable::find(std::string_view name) const {
  for (const auto& col : columns_)
    if (col.name == name) return &col;
  return nullptr;
}

const Column& StudyTable::column(std::string_view name) const {
  if (const Column* c = find(name)) return *c;
  fail(ErrorKind::schema, "no column named '" + std::string(name) + "'");
}

const Column& StudyTable::treatment() const {
  for (const auto& col : columns_)
    if (col.role == Role::treatment) return col;
  fail(ErrorKind::schema, "no treatment column");
}

std::vector<const Column*> StudyTable::with_role(Role role) const {
  std::vector<const Column*> out;
  for (const auto& col : columns_)
    if (col.role == role) out.push_back(&col);
  return out;
}

std::vector<int> StudyTable::treatment_indicator() const {
  const auto& t = treatment();
  std::vector<int> w(t.size());
  std::transform(t.values.begin(), t.values.end(), w.begin(),
                 [](double v) { return static_cast<int>(v); });
  return w;
}

StudyTable StudyTable::select_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> out;
  out.reserve(columns_.size());
  for (const auto& col : columns_) {
    Column c = col;
    c.values.clear();
    c.values.reserve(rows.size());
    for (auto r : rows) c.values.push_back(col.values.at(r));
    out.push_back(std::move(c));
  }
  return StudyTable(name_, std::move(out));
}

StudyTable StudyTable::without_role(Role role) const {
  std::vector<Column> out;
  for (const auto& col : columns_)
    if (col.role != role) out.push_back(col);
  return StudyTable(name_, std::move(out));
}

StudyTable StudyTable::with_columns(std::vector<Column> extra) const {
  std::vector<Column> out = columns_;
  for (auto& c : extra) out.push_back(std::move(c));
  return StudyTable(name_, std::move(out));
}

void StudyTable::require_no_outcomes(std::string_view operation) const {
  auto outcomes = with_role(Role::outcome);
  if (!outcomes.empty())
    fail(ErrorKind::blinding_violation,
         std::string(operation) + " is a design-phase operation but the table still carries outcome column '" +
             outcomes.front()->name + "'");
}

Schema Schema::from_json(const nlohmann::json& doc) {
  Schema s;
  try {
    s.name = doc.value("name", std::string("study"));
    for (const auto& c : doc.at("columns")) {
      ColumnSchema cs;
      cs.name = c.at("name").get<std::string>();
      cs.role = role_from_string(c.at("role").get<std::string>());
      if (c.contains("kind")) {
        cs.kind = kind_from_string(c.at("kind").get<std::string>());
      } else if (cs.role == Role::treatment) {
        cs.kind = Kind::binary;
      } else if (cs.role == Role::unit_id) {
        cs.kind = Kind::categorical;
      }
      if (c.contains("levels")) cs.levels = c.at("levels").get<std::vector<std::string>>();
      s.columns.push_back(std::move(cs));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::schema, std::string("malformed schema: ") + e.what());
  }
  return s;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json j{{"name", c.name},
                     {"role", std::string(to_string(c.role))},
                     {"kind", std::string(to_string(c.kind))}};
    if (!c.levels.empty()) j["levels"] = c.levels;
    cols.push_back(std::move(j));
  }
  return {{"name", name}, {"columns", cols}};
}

Schema schema_of(const StudyTable& table) {
  Schema s;
  s.name = table.name();
  for (const auto& col : table.columns())
    s.columns.push_back({col.name, col.role, col.kind, col.kind == Kind::categorical ? col.levels
                                                                                    : std::vector<std::string>{}});
  return s;
}

std::vector<std::vector<std::string>> read_csv_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  char ch;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    bool blank = record.size() == 1 && record.front().empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  while (in.get(ch)) {
    if (in_quotes) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (in.peek() == '\n') in.get(ch);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (in_quotes) fail(ErrorKind::parse, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

StudyTable parse_csv(std::istream& in, const Schema& schema) {
  auto records = read_csv_records(in);
  if (records.empty()) fail(ErrorKind::parse, "missing header row");
  const auto& header = records.front();
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index[trim(header[j])] = j;

  std::vector<Column> columns;
  for (const auto& cs : schema.columns) {
    auto it = index.find(cs.name);
    if (it == index.end()) fail(ErrorKind::schema, "column '" + cs.name + "' named in schema is missing from header");
    std::size_t j = it->second;

    Column col;
    col.name = cs.name;
    col.role = cs.role;
    col.kind = cs.kind;
    std::vector<std::string> cells;
    cells.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
      if (records[r].size() != header.size())
        fail(ErrorKind::parse, "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                                   " fields, header has " + std::to_string(header.size()));
      std::string cell = trim(records[r][j]);
      if (cell.empty()) fail(ErrorKind::parse, "missing value at " + location(r, cs.name));
      cells.push_back(std::move(cell));
    }

    if (cs.kind == Kind::categorical) {
      std::set<std::string> observed(cells.begin(), cells.end());
      if (cs.levels.empty()) {
        col.levels.assign(observed.begin(), observed.end());
      } else {
        col.levels = cs.levels;
        std::sort(col.levels.begin(), col.levels.end());
        col.levels.erase(std::unique(col.levels.begin(), col.levels.end()), col.levels.end());
      }
      for (std::size_t r = 0; r < cells.size(); ++r) {
        auto pos = std::lower_bound(col.levels.begin(), col.levels.end(), cells[r]);
        if (pos == col.levels.end() || *pos != cells[r])
          fail(ErrorKind::domain, "level '" + cells[r] + "' not in level list at " + location(r + 1, cs.name));
        col.values.push_back(static_cast<double>(pos - col.levels.begin()));
      }
    } else {
      for (std::size_t r = 0; r < cells.size(); ++r) {
        const std::string& cell = cells[r];
        double v = 0;
        auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
          fail(ErrorKind::parse, "cannot parse '" + cell + "' as a number at " + location(r + 1, cs.name));
        if (cs.kind == Kind::binary && v != 0.0 && v != 1.0)
          fail(ErrorKind::domain, "value '" + cell + "' outside {0,1} at " + location(r + 1, cs.name));
        col.values.push_back(v);
      }
    }
    columns.push_back(std::move(col));
  }
  return StudyTable(schema.name, std::move(columns));
}

StudyTable load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  return parse_csv(in, schema);
}

void write_csv(std::ostream& out, const StudyTable& table) {
  const auto& cols = table.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << csv_escape(cols[j].name);
  out << '\n';
  for (std::size_t i = 0; i < table.n_units(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << csv_escape(cols[j].cell_text(i));
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const StudyTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
  write_csv(out, table);
}

}  // namespace obstudy
