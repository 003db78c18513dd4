#include <doctest.h>

#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>

#include "obstudy/audit.hpp"
#include "obstudy/digest.hpp"
#include "obstudy/error.hpp"
#include "obstudy/power.hpp"
#include "obstudy/protocol.hpp"
#include "obstudy/quarantine.hpp"
#include "obstudy/rng.hpp"
#include "obstudy/subclass.hpp"
#include "obstudy/table.hpp"

using namespace obstudy;
namespace fs = std::filesystem;

namespace {

Schema basic_schema() {
  return Schema::from_json(nlohmann::json::parse(R"({"name": "t", "columns": [
    {"name": "id", "role": "unit_id"}, {"name": "age", "role": "covariate"},
    {"name": "w", "role": "treatment"}, {"name": "y", "role": "outcome"}]})"));
}

StudyTable parse(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an obstudy::Error");
  return ErrorKind::io;
}

std::string fixture(const char* name) { return (fs::path(OBSTUDY_FIXTURES) / name).string(); }

Schema load_schema(const char* name) {
  std::ifstream in(fixture(name));
  return Schema::from_json(nlohmann::json::parse(in));
}

}  // namespace

TEST_CASE("load_csv applies roles and keeps row order") {
  StudyTable t = parse("id,age,w,y\n1,40,0,1.5\n2,50,1,2.5\n3,60,0,3\n4,70,1,4\n", basic_schema());
  CHECK(t.n_units() == 4);
  CHECK(t.treatment().name == "w");
  CHECK(t.column("y").role == Role::outcome);
  CHECK(t.column("age").values == std::vector<double>{40, 50, 60, 70});
  CHECK(t.treatment_indicator() == std::vector<int>{0, 1, 0, 1});
}

TEST_CASE("ingest errors carry their kind and location") {
  Schema s = basic_schema();
  SUBCASE("treatment value outside {0,1}") {
    try {
      parse("id,age,w,y\n1,40,0,1\n2,50,2,2\n", s);
      FAIL("expected domain error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::domain);
      CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
  }
  SUBCASE("missing schema column") { CHECK(kind_of([&] { parse("id,age,w\n1,40,0\n", s); }) == ErrorKind::schema); }
  SUBCASE("unparseable cell") {
    try {
      parse("id,age,w,y\n1,forty,0,1\n", s);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
      CHECK(std::string(e.what()).find("age") != std::string::npos);
    }
  }
  SUBCASE("missing covariate cell is rejected, not imputed") {
    CHECK(kind_of([&] { parse("id,age,w,y\n1,,0,1\n", s); }) == ErrorKind::parse);
  }
}

TEST_CASE("quoted fields and CRLF follow RFC 4180") {
  std::istringstream in("a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\n");
  auto rows = read_csv_records(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == "x,1");
  CHECK(rows[1][1] == "say \"hi\"");
  CHECK(csv_escape("a,b") == "\"a,b\"");
}

TEST_CASE("hospital-volume file yields four covariates after the age window") {
  Schema s = load_schema("hospital_volume_basic_schema.json");
  StudyTable all = load_csv(fixture("hospital_volume.csv"), s);
  CHECK(all.n_units() == 158);
  RangeRestriction r = restrict_range(all, "age", 35, 84);
  CHECK(r.table.n_units() == 148);
  CHECK(r.log.n_below == 2);
  CHECK(r.log.n_above == 8);
  CHECK(r.table.with_role(Role::covariate).size() == 4);
  CHECK(r.table.with_role(Role::intermediate).size() == 1);
  CHECK(r.table.treatment().name == "home_large");
  CHECK(r.table.column("urbanization").levels == std::vector<std::string>{"rural", "town", "urban"});
}

TEST_CASE("CSV round trip is cell-identical") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    std::ostringstream src;
    src << "id,age,w,y\n";
    for (int i = 0; i < 15; ++i)
      src << i << ',' << format_number(rng.normal() * 1e3) << ',' << (rng.bernoulli(0.5) ? 1 : 0) << ','
          << format_number(rng.uniform() / 3.0) << '\n';
    StudyTable t = parse(src.str(), basic_schema());
    std::ostringstream out;
    write_csv(out, t);
    StudyTable back = parse(out.str(), basic_schema());
    for (const auto& c : t.columns()) CHECK(back.column(c.name).values == c.values);
  }
}

TEST_CASE("quarantine strips outcomes and keeps intermediates") {
  Schema s = load_schema("hospital_volume_schema.json");
  StudyTable t = load_csv(fixture("hospital_volume.csv"), s);
  Quarantine q = quarantine_outcomes(t);
  CHECK_FALSE(q.design_table.has_outcomes());
  CHECK(q.design_table.find("treated_large") != nullptr);
  CHECK(q.sealed.column_names() == std::vector<std::string>{"survival_years"});
  CHECK(q.sealed.payload_digest().size() == 64);
  CHECK(quarantine_outcomes(t).sealed.payload_digest() == q.sealed.payload_digest());
  CHECK_NOTHROW(q.design_table.require_no_outcomes("fit"));
  CHECK(kind_of([&] { t.require_no_outcomes("fit"); }) == ErrorKind::blinding_violation);
}

TEST_CASE("several outcomes are sealed together; none is an error") {
  Column id{"id", Role::unit_id, Kind::numeric, {1, 2}, {}};
  Column w{"w", Role::treatment, Kind::binary, {0, 1}, {}};
  Column y5{"y5", Role::outcome, Kind::numeric, {1, 0}, {}};
  Column y10{"y10", Role::outcome, Kind::binary, {0, 1}, {}};
  Quarantine q = quarantine_outcomes(StudyTable("t", {id, w, y5, y10}));
  CHECK(q.sealed.column_names().size() == 2);
  CHECK(kind_of([&] { quarantine_outcomes(StudyTable("t", {id, w})); }) == ErrorKind::nothing_to_seal);
}

TEST_CASE("unseal succeeds only when frozen and intact") {
  Column id{"id", Role::unit_id, Kind::numeric, {1, 2, 3}, {}};
  Column w{"w", Role::treatment, Kind::binary, {0, 1, 1}, {}};
  Column y{"y", Role::outcome, Kind::numeric, {0.25, -1, 1e-7}, {}};
  Column g{"g", Role::outcome, Kind::categorical, {1, 0, 1}, {"a", "b"}};
  Quarantine q = quarantine_outcomes(StudyTable("t", {id, w, y, g}));

  DesignProtocol open_protocol;
  AuditRecord rec;
  CHECK(kind_of([&] { unseal_outcomes(q.sealed, open_protocol, rec); }) == ErrorKind::blinding_violation);
  CHECK(rec.violation);
  CHECK(rec.outcome_access == OutcomeAccess::refused);

  DesignProtocol frozen;
  frozen.freeze({1, 1, 1});
  AuditRecord ok;
  auto cols = unseal_outcomes(q.sealed, frozen, ok);
  REQUIRE(cols.size() == 2);
  CHECK(cols[0].values == y.values);
  CHECK(cols[1].levels == g.levels);
  CHECK(cols[1].values == g.values);
  CHECK(ok.outcome_access == OutcomeAccess::granted);

  // flip one bit of the payload
  auto j = q.sealed.to_json();
  std::string payload = j["payload"];
  payload[payload.size() / 2] ^= 0x01;
  j["payload"] = payload;
  AuditRecord bad;
  CHECK(kind_of([&] { unseal_outcomes(SealedOutcomes::from_json(j), frozen, bad); }) == ErrorKind::tamper);
  CHECK(bad.violation);
}

TEST_CASE("unseal through an audit log appends one record") {
  Column id{"id", Role::unit_id, Kind::numeric, {1, 2}, {}};
  Column w{"w", Role::treatment, Kind::binary, {0, 1}, {}};
  Column y{"y", Role::outcome, Kind::numeric, {3, 4}, {}};
  Quarantine q = quarantine_outcomes(StudyTable("t", {id, w, y}));
  AuditLog log;
  DesignProtocol p;
  CHECK_THROWS_AS(unseal_outcomes(q.sealed, p, log), Error);
  p.freeze({1, 1});
  unseal_outcomes(q.sealed, p, log);
  REQUIRE(log.records().size() == 2);
  CHECK(log.violations() == 1);
  CHECK(log.records()[1].outcome_access == OutcomeAccess::granted);
}

TEST_CASE("frozen protocol is immutable and its digest reproducible") {
  DesignProtocol p;
  ModelSpec spec{{Term::main("age"), Term::power("age", 2)}, true};
  p.set_model_spec(spec);
  p.set_subclass_plan({SubclassMethod::equal_frequency, 5, "linear_propensity_score"});
  p.freeze({1, 2, 3, 4, 5});
  CHECK(p.frozen());
  CHECK(p.freeze_digest() == p.compute_digest());
  CHECK(p.freeze_digest().find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(kind_of([&] { p.set_model_spec(spec); }) == ErrorKind::protocol_frozen);
  CHECK(kind_of([&] { p.set_thresholds({}); }) == ErrorKind::protocol_frozen);
  CHECK(kind_of([&] { p.freeze({1}); }) == ErrorKind::protocol_frozen);

  DesignProtocol back = DesignProtocol::from_json(p.to_json());
  CHECK(back.freeze_digest() == p.freeze_digest());
  auto j = p.to_json();
  j["labels"][0] = 2;
  CHECK(kind_of([&] { DesignProtocol::from_json(j); }) == ErrorKind::tamper);
}

TEST_CASE("adequacy check against an independent normal table") {
  // z_{0.975} = 1.959963984540054, z_{0.8} = 0.8416212335729143
  AdequacyVerdict v = adequacy_check(10, 10, 0.5, 0.05, 0.8);
  CHECK(v.required_n_per_arm_exact == doctest::Approx(62.79).epsilon(1e-4));
  CHECK(v.required_n_per_arm == 63);
  CHECK_FALSE(v.adequate);

  AdequacyVerdict big = adequacy_check(79, 79, 0.5, 0.05, 0.8);
  CHECK(big.achieved_power == doctest::Approx(0.8814937967176529).epsilon(1e-9));
  CHECK(big.adequate);

  CHECK(kind_of([] { adequacy_check(10, 10, 0.0, 0.05, 0.8); }) == ErrorKind::domain);
  CHECK(kind_of([] { adequacy_check(0, 10, 0.5, 0.05, 0.8); }) == ErrorKind::domain);
  CHECK(kind_of([] { adequacy_check(10, 10, 0.5, 1.0, 0.8); }) == ErrorKind::domain);
}

TEST_CASE("sha256 matches the standard test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("audit log persists as JSON lines") {
  fs::path p = fs::temp_directory_path() / "obstudy_audit_test.jsonl";
  fs::remove(p);
  {
    AuditLog log = AuditLog::open(p);
    AuditRecord r;
    r.command = {"design", "fit"};
    r.input_digests["design_table"] = "ab";
    log.append(r);
    r.violation = true;
    log.append(r);
  }
  AuditLog again = AuditLog::open(p);
  REQUIRE(again.records().size() == 2);
  CHECK(again.records()[0].command == std::vector<std::string>{"design", "fit"});
  CHECK(again.violations() == 1);
  fs::remove(p);
}
