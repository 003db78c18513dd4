import json
import math
import os
import pathlib
import random

import pytest

import obstudy

FIXTURES = pathlib.Path(os.environ.get("OBSTUDY_FIXTURES", pathlib.Path(__file__).parents[2] / "tests" / "fixtures"))


def hospital():
    schema = json.loads((FIXTURES / "hospital_volume_basic_schema.json").read_text())
    table = obstudy.load_csv(FIXTURES / "hospital_volume.csv", schema)
    return obstudy.restrict_range(table, "age", 35, 84)


def test_load_quarantine_fit_subclass_balance():
    table = hospital()
    assert table.n_units == 148
    design, digest, sealed = obstudy.quarantine(table)
    assert not design.has_outcomes()
    assert sealed == ["survival_years"]
    assert len(digest) == 64

    model = {"include_intercept": True, "terms": [{"kind": "main", "column": c} for c in ("age", "male", "urbanization")]}
    fit = obstudy.fit_propensity(design, model)
    assert fit["converged"]
    assert len(fit["linear_scores"]) == 148

    sub = obstudy.subclassify(fit["linear_scores"], 5)
    assert sub["k"] == 5
    report = obstudy.balance_report(design, fit["linear_scores"], sub["labels"], 5)
    assert report["rows"][-1]["covariate"] == "linear_propensity_score"


def test_fitting_with_outcomes_is_refused():
    with pytest.raises(obstudy.ObstudyError) as info:
        obstudy.fit_propensity(hospital(), {"include_intercept": True, "terms": [{"kind": "main", "column": "age"}]})
    assert info.value.kind == "blinding_violation"


def test_logistic_fixture_values():
    x = [-2, -1.2, -0.5, 0.1, 0.4, 1.0, 1.5, 2.3]
    w = [0, 0, 1, 0, 1, 0, 1, 1]
    rows = "\n".join(f"{i},{v},{t}" for i, (v, t) in enumerate(zip(x, w)))
    path = pathlib.Path(os.environ.get("TMPDIR", "/tmp")) / "obstudy_smoke_logit.csv"
    path.write_text("id,x,w\n" + rows + "\n")
    schema = {"name": "t", "columns": [{"name": "id", "role": "unit_id"}, {"name": "x", "role": "covariate"},
                                       {"name": "w", "role": "treatment"}]}
    fit = obstudy.fit_propensity(obstudy.load_csv(path, schema),
                                 {"include_intercept": True, "terms": [{"kind": "main", "column": "x"}]})
    path.unlink()
    assert fit["coefficients"][0] == pytest.approx(-0.232310, abs=1e-5)
    assert fit["coefficients"][1] == pytest.approx(1.074621, abs=1e-5)


def test_grouped_table_and_strata():
    rows = [(1, 1, 56, 85.6), (1, 0, 1008, 86.7), (2, 1, 106, 82.8), (2, 0, 964, 83.4), (3, 1, 193, 85.2),
            (3, 0, 866, 88.8), (4, 1, 289, 88.7), (4, 0, 978, 87.3), (5, 1, 462, 89.0), (5, 0, 604, 88.5)]
    est = obstudy.grouped_difference(rows)
    assert est["point"] == pytest.approx(-0.6004, abs=1e-3)
    assert est["std_error"] is None

    pi_ll, pi_ls, pi_ss = obstudy.estimate_strata(12, 0, 12, 5)
    assert (round(100 * pi_ll), round(100 * pi_ls), pi_ss) == (71, 29, 0.0)
    with pytest.raises(obstudy.ObstudyError) as info:
        obstudy.estimate_strata(1, 5, 5, 1)
    assert info.value.kind == "weak_instrument"


def test_estimators_on_random_data():
    rng = random.Random(3)
    n = 400
    s = [rng.gauss(0, 1) for _ in range(n)]
    w = [1 if rng.random() < 1 / (1 + math.exp(-v)) else 0 for v in s]
    y = [v + t + rng.gauss(0, 1) for v, t in zip(s, w)]
    labels = obstudy.subclassify(s, 1)["labels"]
    crude = obstudy.crude_difference(y, w)
    strat = obstudy.stratified_difference(y, w, labels, 1)
    assert strat["point"] == pytest.approx(crude["point"])
    assert obstudy.standardized_diff(s, w) > 0


def test_adequacy():
    v = obstudy.adequacy_check(10, 10, 0.5)
    assert v["required_n_per_arm"] == 63
    assert not v["adequate"]


def test_simulate_and_cli(tmp_path):
    study = json.loads((FIXTURES / "confounded_default.json").read_text())
    summary, csv = obstudy.simulate(study, 6, 11, threads=2)
    assert summary["generator"] == obstudy.GENERATOR
    assert csv.startswith("replication,")

    ws = tmp_path / "ws"
    code, out, _ = obstudy.run_cli(["-w", ws, "ingest", FIXTURES / "hospital_volume.csv", "--schema",
                                    FIXTURES / "hospital_volume_basic_schema.json"])
    assert code == 0 and "ingested" in out
    code, _, err = obstudy.run_cli(["-w", ws, "analyze", "estimate"])
    assert code == 4 and "blinding_violation" in err
