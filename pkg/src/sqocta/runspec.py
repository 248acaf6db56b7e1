"""Run-spec documents: the JSON surface of the CLI.

Schema is versioned; unknown fields are rejected with the offending path
so specs stay diffable across implementations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .lattice import Boundary, LatticeSpec
from .protocols import ExperimentPlan

__all__ = ["RunSpec", "RunSpecError", "parse_runspec", "plan_from_doc"]

RUNSPEC_SCHEMA_VERSION = 1

KINDS = ("equilibrium", "hysteresis", "phase-diagram", "ed-suite", "entropy-study", "render")


class RunSpecError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class RunSpec:
    kind: str
    plan: ExperimentPlan
    out_dir: str | None = None
    formats: tuple[str, ...] = ("jsonl", "csv")
    criterion: float = 0.5  # phase-diagram crossing level
    ed_options: dict | None = None  # ed-suite knobs
    render_state: str = "fim"  # render kind: fim | saturated | random
    doc: dict | None = None  # original document (for hashing)


def _expect(cond: bool, path: str, msg: str):
    if not cond:
        raise RunSpecError(path, msg)


_LATTICE_KEYS = {"rows", "cols", "chain_length", "boundary", "vacancies"}


def _parse_lattice(doc, path) -> LatticeSpec:
    _expect(isinstance(doc, dict), path, "must be an object")
    unknown = set(doc) - _LATTICE_KEYS
    _expect(not unknown, f"{path}.{sorted(unknown)[0]}" if unknown else path, "unknown field")
    for k in ("rows", "cols"):
        _expect(k in doc, f"{path}.{k}", "required")
        _expect(isinstance(doc[k], int) and doc[k] > 0, f"{path}.{k}", "must be a positive integer")
    cl = doc.get("chain_length", 4)
    _expect(isinstance(cl, int) and cl > 0, f"{path}.chain_length", "must be a positive integer")
    b = doc.get("boundary", "fully_periodic")
    _expect(b in [x.value for x in Boundary], f"{path}.boundary",
            f"must be one of {[x.value for x in Boundary]}")
    vac = doc.get("vacancies", [])
    _expect(isinstance(vac, list) and all(isinstance(v, int) for v in vac),
            f"{path}.vacancies", "must be a list of integers")
    try:
        return LatticeSpec(rows=doc["rows"], cols=doc["cols"], chain_length=cl,
                           boundary=Boundary(b), vacancies=frozenset(vac))
    except ValueError as e:
        raise RunSpecError(path, str(e)) from None


_PLAN_FIELDS = {f.name for f in fields(ExperimentPlan)}
_NUMERIC_POSITIVE = {"replicas", "samples", "l_tau", "measure_every", "nprocs"}
_NUMERIC_NONNEG = {"dwell_sweeps", "anneal_sweeps", "quench_sweeps", "qemc_ramp_sweeps", "seed"}


def plan_from_doc(doc: dict, path: str = "plan") -> ExperimentPlan:
    _expect(isinstance(doc, dict), path, "must be an object")
    unknown = set(doc) - _PLAN_FIELDS
    if unknown:
        raise RunSpecError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    kw = {}
    for k, v in doc.items():
        p = f"{path}.{k}"
        if k == "lattice":
            kw[k] = _parse_lattice(v, p)
        elif k in ("gammas", "betas", "h_grid", "rates"):
            _expect(isinstance(v, list) and v and all(isinstance(x, (int, float)) for x in v),
                    p, "must be a non-empty list of numbers")
            if k == "betas":
                _expect(all(x > 0 for x in v), p, "must be positive")
            if k == "gammas":
                _expect(all(x >= 0 for x in v), p, "must be >= 0")
            kw[k] = tuple(float(x) for x in v)
        elif k == "directions":
            _expect(isinstance(v, list) and v, p, "must be a non-empty list")
            kw[k] = tuple(v)
        elif k in _NUMERIC_POSITIVE:
            _expect(isinstance(v, int) and v > 0, p, "must be a positive integer")
            kw[k] = v
        elif k in _NUMERIC_NONNEG:
            _expect(isinstance(v, int) and v >= 0, p, "must be a non-negative integer")
            kw[k] = v
        elif k == "measure_fraction":
            _expect(isinstance(v, (int, float)) and 0 < v <= 1, p, "must be in (0, 1]")
            kw[k] = float(v)
        elif k in ("with_local_entropy",):
            _expect(isinstance(v, bool), p, "must be a boolean")
            kw[k] = v
        else:
            kw[k] = v
    try:
        return ExperimentPlan(**kw)
    except ValueError as e:
        raise RunSpecError(path, str(e)) from None


_TOP_KEYS = {"schema_version", "kind", "plan", "out_dir", "formats", "criterion",
             "ed_options", "render_state"}


def parse_runspec(doc: dict) -> RunSpec:
    _expect(isinstance(doc, dict), "$", "run spec must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise RunSpecError(sorted(unknown)[0], "unknown field")
    _expect(doc.get("schema_version") == RUNSPEC_SCHEMA_VERSION, "schema_version",
            f"must be {RUNSPEC_SCHEMA_VERSION}")
    kind = doc.get("kind")
    _expect(kind in KINDS, "kind", f"must be one of {list(KINDS)}")
    plan = plan_from_doc(doc.get("plan", {}))
    formats = doc.get("formats", ["jsonl", "csv"])
    _expect(isinstance(formats, list) and formats and
            all(f in ("jsonl", "csv") for f in formats), "formats",
            "must be a non-empty list drawn from ['jsonl', 'csv']")
    criterion = doc.get("criterion", 0.5)
    _expect(isinstance(criterion, (int, float)) and 0 < criterion < 1, "criterion",
            "must be in (0, 1)")
    render_state = doc.get("render_state", "fim")
    _expect(render_state in ("fim", "saturated", "random"), "render_state",
            "must be one of ['fim', 'saturated', 'random']")
    ed_options = doc.get("ed_options")
    if ed_options is not None:
        _expect(isinstance(ed_options, dict), "ed_options", "must be an object")
    return RunSpec(
        kind=kind, plan=plan, out_dir=doc.get("out_dir"),
        formats=tuple(formats), criterion=float(criterion),
        ed_options=ed_options, render_state=render_state, doc=doc,
    )


def load_runspec(path) -> RunSpec:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise RunSpecError("$", f"invalid JSON: {e}") from None
    return parse_runspec(doc)
