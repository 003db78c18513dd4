#include "obstudy/model_spec.hpp"

#include <algorithm>
#include <cmath>

#include "obstudy/error.hpp"

namespace obstudy {

Term Term::main(std::string column) { return {TermKind::main, std::move(column), {}, 1}; }

Term Term::interaction(std::string a, std::string b) {
  return {TermKind::interaction, std::move(a), std::move(b), 1};
}

Term Term::power(std::string column, int exponent) {
  if (exponent < 2) fail(ErrorKind::spec, "power term exponent must be >= 2");
  return {TermKind::power, std::move(column), {}, exponent};
}

std::string Term::label() const {
  switch (kind) {
    case TermKind::main: return column;
    case TermKind::interaction: return column + ":" + other;
    case TermKind::power: return column + "^" + std::to_string(exponent);
  }
  return column;
}

bool Term::operator==(const Term& rhs) const {
  if (kind != rhs.kind) return false;
  switch (kind) {
    case TermKind::main: return column == rhs.column;
    case TermKind::interaction:
      return (column == rhs.column && other == rhs.other) || (column == rhs.other && other == rhs.column);
    case TermKind::power: return column == rhs.column && exponent == rhs.exponent;
  }
  return false;
}

nlohmann::json Term::to_json() const {
  switch (kind) {
    case TermKind::main: return {{"kind", "main"}, {"column", column}};
    case TermKind::interaction: return {{"kind", "interaction"}, {"columns", {column, other}}};
    case TermKind::power: return {{"kind", "power"}, {"column", column}, {"exponent", exponent}};
  }
  return {};
}

Term Term::from_json(const nlohmann::json& j) {
  try {
    auto kind = j.at("kind").get<std::string>();
    if (kind == "main") return main(j.at("column").get<std::string>());
    if (kind == "interaction") {
      auto cols = j.at("columns").get<std::vector<std::string>>();
      if (cols.size() != 2) fail(ErrorKind::spec, "interaction term needs exactly two columns");
      return interaction(cols[0], cols[1]);
    }
    if (kind == "power") return power(j.at("column").get<std::string>(), j.at("exponent").get<int>());
    fail(ErrorKind::spec, "unknown term kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::spec, std::string("malformed term: ") + e.what());
  }
}

void ModelSpec::validate(const StudyTable& table) const {
  auto check = [&](const std::string& name) {
    const Column* col = table.find(name);
    if (!col) fail(ErrorKind::spec, "model term references unknown column '" + name + "'");
    if (col->role != Role::covariate)
      fail(ErrorKind::spec, "model term references '" + name + "' whose role is " +
                                std::string(to_string(col->role)) + ", not covariate");
  };
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Term& t = terms[i];
    check(t.column);
    if (t.kind == TermKind::interaction) check(t.other);
    if (t.kind == TermKind::power && table.column(t.column).kind == Kind::categorical)
      fail(ErrorKind::spec, "power term on categorical column '" + t.column + "'");
    for (std::size_t j = 0; j < i; ++j)
      if (terms[j] == t) fail(ErrorKind::spec, "duplicate model term '" + t.label() + "'");
  }
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& t : terms) ts.push_back(t.to_json());
  return {{"include_intercept", include_intercept}, {"terms", ts}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec spec;
  try {
    spec.include_intercept = j.value("include_intercept", true);
    for (const auto& t : j.at("terms")) spec.terms.push_back(Term::from_json(t));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::spec, std::string("malformed model spec: ") + e.what());
  }
  return spec;
}

namespace {

TermColumns expand_main(const Column& col) {
  TermColumns out;
  if (col.kind != Kind::categorical) {
    out.labels.push_back(col.name);
    out.values.push_back(col.values);
    return out;
  }
  for (std::size_t level = 1; level < col.levels.size(); ++level) {
    out.labels.push_back(col.name + "[" + col.levels[level] + "]");
    std::vector<double> dummy(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) dummy[i] = col.values[i] == static_cast<double>(level) ? 1.0 : 0.0;
    out.values.push_back(std::move(dummy));
  }
  return out;
}

}  // namespace

TermColumns expand_term(const StudyTable& table, const Term& term) {
  const Column& a = table.column(term.column);
  switch (term.kind) {
    case TermKind::main: return expand_main(a);
    case TermKind::power: {
      if (a.kind == Kind::categorical) fail(ErrorKind::spec, "power term on categorical column '" + a.name + "'");
      TermColumns out;
      out.labels.push_back(term.label());
      std::vector<double> v(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) v[i] = std::pow(a.values[i], term.exponent);
      out.values.push_back(std::move(v));
      return out;
    }
    case TermKind::interaction: {
      TermColumns left = expand_main(a);
      TermColumns right = expand_main(table.column(term.other));
      TermColumns out;
      for (std::size_t p = 0; p < left.values.size(); ++p) {
        for (std::size_t q = 0; q < right.values.size(); ++q) {
          out.labels.push_back(left.labels[p] + ":" + right.labels[q]);
          std::vector<double> v(table.n_units());
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = left.values[p][i] * right.values[q][i];
          out.values.push_back(std::move(v));
        }
      }
      return out;
    }
  }
  return {};
}

DesignMatrix expand_design_matrix(const StudyTable& table, const ModelSpec& spec) {
  spec.validate(table);
  for (const auto& t : spec.terms) {
    for (const auto* name : {&t.column, &t.other}) {
      if (name->empty()) continue;
      if (table.column(*name).is_constant())
        fail(ErrorKind::degenerate_column, "covariate '" + *name + "' is constant");
    }
  }

  std::vector<std::string> labels;
  std::vector<std::vector<double>> cols;
  if (spec.include_intercept) {
    labels.push_back("(intercept)");
    cols.emplace_back(table.n_units(), 1.0);
  }
  for (const auto& t : spec.terms) {
    TermColumns tc = expand_term(table, t);
    for (std::size_t k = 0; k < tc.values.size(); ++k) {
      const auto& v = tc.values[k];
      bool constant = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
      if (constant) fail(ErrorKind::degenerate_column, "design column '" + tc.labels[k] + "' is constant");
      labels.push_back(tc.labels[k]);
      cols.push_back(v);
    }
  }

  DesignMatrix dm;
  dm.has_intercept = spec.include_intercept;
  dm.labels = std::move(labels);
  dm.values.resize(static_cast<Eigen::Index>(table.n_units()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < table.n_units(); ++i)
      dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[j][i];
  return dm;
}

std::vector<double> LinearPredictor::evaluate(const StudyTable& table) const {
  std::vector<double> out(table.n_units(), intercept);
  for (const auto& [term, coef] : terms) {
    TermColumns tc = expand_term(table, term);
    if (tc.values.size() != 1)
      fail(ErrorKind::spec, "linear predictor term '" + term.label() + "' must expand to one column");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += coef * tc.values[0][i];
  }
  return out;
}

nlohmann::json LinearPredictor::to_json() const {
  nlohmann::json ts = nlohmann::json::array();
  for (const auto& [term, coef] : terms) {
    auto j = term.to_json();
    j["coefficient"] = coef;
    ts.push_back(std::move(j));
  }
  return {{"intercept", intercept}, {"terms", ts}};
}

LinearPredictor LinearPredictor::from_json(const nlohmann::json& j) {
  LinearPredictor lp;
  if (j.is_number()) return constant(j.get<double>());
  try {
    lp.intercept = j.value("intercept", 0.0);
    if (j.contains("terms"))
      for (const auto& t : j.at("terms")) lp.terms.emplace_back(Term::from_json(t), t.at("coefficient").get<double>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::spec, std::string("malformed linear predictor: ") + e.what());
  }
  return lp;
}

}  // namespace obstudy
