#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "obstudy/audit.hpp"
#include "obstudy/workspace.hpp"

using namespace obstudy;
namespace fs = std::filesystem;

namespace {

std::string fixture(const char* name) { return (fs::path(OBSTUDY_FIXTURES) / name).string(); }

struct Run {
  int code;
  std::string out, err;
};

struct Workspace {
  fs::path dir;

  explicit Workspace(const std::string& tag) : dir(fs::temp_directory_path() / ("obstudy_cli_" + tag)) {
    fs::remove_all(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  Run operator()(std::vector<std::string> args) const {
    args.insert(args.begin(), {"-w", dir.string()});
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
  }

  std::vector<AuditRecord> audit() const { return AuditLog::open(dir / "audit.jsonl").records(); }

  void ingest() const {
    Run r = (*this)({"ingest", fixture("hospital_volume.csv"), "--schema", fixture("hospital_volume_basic_schema.json"),
                     "--restrict", "age:35:84"});
    REQUIRE(r.code == 0);
  }

  void design_and_freeze() const {
    ingest();
    REQUIRE((*this)({"design", "fit"}).code == 0);
    REQUIRE((*this)({"design", "subclass", "--method", "quantile", "--k", "5"}).code == 0);
    // four covariates on 148 rows do not pass the default gate
    REQUIRE((*this)({"design", "balance"}).code == 3);
    Run f = (*this)({"design", "freeze", "--allow-imbalance"});
    REQUIRE(f.code == 0);
    REQUIRE(f.out.rfind("frozen ", 0) == 0);
  }
};

int exit_status(int raw) { return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1; }

}  // namespace

TEST_CASE("exit codes by error kind") {
  CHECK(exit_code_for(ErrorKind::schema) == 2);
  CHECK(exit_code_for(ErrorKind::blinding_violation) == 4);
  CHECK(exit_code_for(ErrorKind::tamper) == 4);
  CHECK(exit_code_for(ErrorKind::separation) == 5);
  CHECK(exit_code_for(ErrorKind::weak_instrument) == 5);
}

TEST_CASE("full pipeline writes every artifact and one audit record per command") {
  Workspace ws("pipeline");
  ws.design_and_freeze();
  for (const char* f : {"design.csv", "sealed.json", "fit.json", "fit.csv", "overlap.json", "subclass.json",
                        "subclass.csv", "balance.json", "love_plot.csv", "love_plot.svg", "protocol.json"})
    CHECK_MESSAGE(fs::exists(ws.dir / f), f);

  Run est = ws({"analyze", "estimate"});
  CHECK(est.code == 0);
  Run itt = ws({"analyze", "itt"});
  CHECK(itt.code == 0);
  Run strata = ws({"analyze", "strata", "--treated-col", "treated_large"});
  CHECK(strata.code == 0);
  Run cace = ws({"analyze", "cace", "--treated-col", "treated_large", "--pooling", "size"});
  CHECK(cace.code == 0);
  CHECK(cace.out.find("\"pooling\": \"size\"") != std::string::npos);
  CHECK(fs::exists(ws.dir / "results"));

  auto log = ws.audit();
  CHECK(log.size() == 9);
  CHECK(log.front().command[2] == "ingest");
  CHECK(log[4].phase == Phase::frozen);
  CHECK(log[5].phase == Phase::analysis);
  CHECK(log[5].outcome_access == OutcomeAccess::granted);
  for (std::size_t i = 0; i < 5; ++i) CHECK(log[i].outcome_access == OutcomeAccess::none);
  for (const auto& r : log) CHECK_FALSE(r.violation);
  CHECK_FALSE(fs::exists(ws.dir / ".lock"));
}

TEST_CASE("analysis before freeze is a blinding violation") {
  Workspace ws("early");
  ws.ingest();
  Run r = ws({"analyze", "estimate"});
  CHECK(r.code == 4);
  CHECK(r.err.find("blinding_violation") != std::string::npos);
  auto log = ws.audit();
  REQUIRE(log.size() == 2);
  CHECK(log[1].violation);
  CHECK(log[1].outcome_access == OutcomeAccess::refused);
  CHECK(log[1].exit_code == 4);
}

TEST_CASE("design commands are closed after freeze") {
  Workspace ws("closed");
  ws.design_and_freeze();
  for (std::vector<std::string> cmd : {std::vector<std::string>{"design", "fit"},
                                       {"design", "subclass", "--k", "4"},
                                       {"design", "freeze"}}) {
    Run r = ws(cmd);
    CHECK(r.code == 2);
    CHECK(r.err.find("protocol_frozen") != std::string::npos);
  }
  Run again = ws({"ingest", fixture("hospital_volume.csv"), "--schema", fixture("hospital_volume_basic_schema.json")});
  CHECK(again.code == 2);
}

TEST_CASE("a held lock refuses the command without touching the audit log") {
  Workspace ws("lock");
  ws.ingest();
  std::ofstream(ws.dir / ".lock") << "held";
  Run r = ws({"design", "fit"});
  CHECK(r.code == 2);
  CHECK(r.err.find("locked") != std::string::npos);
  CHECK(ws.audit().size() == 1);
  fs::remove(ws.dir / ".lock");
  CHECK(ws({"design", "fit"}).code == 0);
}

TEST_CASE("separation exits with the numerical status") {
  Workspace ws("separation");
  fs::path csv = fs::temp_directory_path() / "obstudy_cli_separation.csv";
  fs::path schema = fs::temp_directory_path() / "obstudy_cli_separation.json";
  std::ofstream(csv) << "id,x,w,y\n1,1,0,1\n2,2,0,2\n3,3,0,3\n4,4,1,4\n5,5,1,5\n6,6,1,6\n";
  std::ofstream(schema) << R"({"name": "s", "columns": [{"name": "id", "role": "unit_id"},
    {"name": "x", "role": "covariate"}, {"name": "w", "role": "treatment"}, {"name": "y", "role": "outcome"}]})";
  REQUIRE(ws({"ingest", csv.string(), "--schema", schema.string()}).code == 0);
  Run r = ws({"design", "fit"});
  CHECK(r.code == 5);
  CHECK(r.err.find("x") != std::string::npos);
  fs::remove(csv);
  fs::remove(schema);
}

TEST_CASE("replaying the audited commands reproduces the output digests") {
  Workspace a("replay_a"), b("replay_b");
  a.design_and_freeze();
  REQUIRE(a({"analyze", "estimate"}).code == 0);

  for (const auto& rec : a.audit()) {
    std::vector<std::string> args(rec.command.begin() + 2, rec.command.end());  // drop -w <dir>
    CHECK(b(args).code == rec.exit_code);
  }
  auto ra = a.audit(), rb = b.audit();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].output_digests == rb[i].output_digests);
    CHECK(ra[i].input_digests == rb[i].input_digests);
  }
  CHECK_FALSE(ra.back().output_digests.empty());
}

TEST_CASE("simulate writes replications and a summary") {
  fs::path out = fs::temp_directory_path() / "obstudy_cli_sim";
  fs::remove_all(out);
  std::ostringstream o, e;
  int code = run_cli({"simulate", fixture("confounded_default.json"), "--reps", "8", "--seed", "3", "--out",
                      out.string(), "--threads", "2"},
                     o, e);
  CHECK(code == 0);
  CHECK(fs::exists(out / "replications.csv"));
  std::ifstream in(out / "summary.json");
  auto summary = nlohmann::json::parse(in);
  CHECK(summary.dump().find("stratified") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("the installed binary reports the same statuses") {
  Workspace ws("binary");
  std::string cli = OBSTUDY_CLI;
  std::string base = cli + " -w " + ws.dir.string() + " ";
  CHECK(exit_status(std::system((base + "ingest " + fixture("hospital_volume.csv") + " --schema " +
                                 fixture("hospital_volume_basic_schema.json") + " >/dev/null 2>&1")
                                    .c_str())) == 0);
  CHECK(exit_status(std::system((base + "analyze estimate >/dev/null 2>&1").c_str())) == 4);
  CHECK(exit_status(std::system((cli + " --no-such-flag >/dev/null 2>&1").c_str())) == 2);
}
