"""Python front end for the obstudy C++ core.

Structured results come back from the extension as JSON text; the wrappers
here decode them into plain dicts.
"""

import json as _json

from . import _obstudy
from ._obstudy import (
    GENERATOR,
    ObstudyError,
    StudyTable,
    adequacy_check,
    estimate_strata,
    quarantine,
    restrict_range,
    standardized_diff,
)

__all__ = [
    "GENERATOR",
    "ObstudyError",
    "StudyTable",
    "adequacy_check",
    "balance_report",
    "cace_by_subclass",
    "crude_difference",
    "estimate_strata",
    "fit_propensity",
    "grouped_difference",
    "load_csv",
    "monotonicity_audit",
    "quarantine",
    "restrict_range",
    "run_cli",
    "simulate",
    "standardized_diff",
    "stratified_difference",
    "subclassify",
    "trim_nonoverlap",
]


def _dump(obj):
    return obj if isinstance(obj, str) else _json.dumps(obj)


def load_csv(path, schema):
    """Load a CSV with a role schema (dict or JSON text)."""
    return _obstudy.load_csv(str(path), _dump(schema))


def fit_propensity(design_table, model):
    """Logistic propensity fit; `model` is a ModelSpec dict."""
    return _json.loads(_obstudy.fit_propensity(design_table, _dump(model)))


def subclassify(scores, k=5, method="quantile"):
    return _json.loads(_obstudy.subclassify(list(scores), k, method))


def trim_nonoverlap(labels, k, w):
    return _json.loads(_obstudy.trim_nonoverlap(list(labels), k, list(w)))


def balance_report(design_table, linear_scores, labels, k):
    return _json.loads(_obstudy.balance_report(design_table, list(linear_scores), list(labels), k))


def crude_difference(y, w):
    return _json.loads(_obstudy.crude_difference(list(y), list(w)))


def stratified_difference(y, w, labels, k, weighting="total"):
    return _json.loads(_obstudy.stratified_difference(list(y), list(w), list(labels), k, weighting))


def grouped_difference(rows):
    """Rows of (subclass, arm, n, mean); arm is 1 for treated, 0 for control."""
    return _json.loads(_obstudy.grouped_difference([tuple(r) for r in rows]))


def cace_by_subclass(y, h, t, labels, k, pooling="mass"):
    return _json.loads(_obstudy.cace_by_subclass(list(y), list(h), list(t), list(labels), k, pooling))


def monotonicity_audit(h, t, labels, k, direction="no_SL"):
    return _json.loads(_obstudy.monotonicity_audit(list(h), list(t), list(labels), k, direction))


def simulate(study, reps, seed, threads=0):
    """Replicated simulation study. Returns (summary dict, replications CSV text)."""
    summary, csv = _obstudy.simulate(_dump(study), reps, seed, threads)
    return _json.loads(summary), csv


def run_cli(args):
    """Run one obstudy command line in-process; returns (exit_code, stdout, stderr)."""
    return _obstudy.run_cli([str(a) for a in args])
