"""Command-line interface.

Subcommands:
  run <spec.json>      execute a run spec (equilibrium, hysteresis,
                       phase-diagram, ed-suite, entropy-study, render)
  ed                   quick exact-diagonalization queries
  render <records>     re-render a recorded state to SVG
  summarize <records>  aggregate records into a curve-point table

Output root resolution: --out flag, then the spec's out_dir, then
$SQOCTA_OUT, then ./sqocta_out.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, ed, records
from .classical_mc import fim_configuration, make_rng, random_configuration, saturated_configuration
from .lattice import Boundary, LatticeSpec, build_lattice, lattice_to_json
from .model import EffectiveModelParams, ModelParams
from .observables import render_state_map
from .protocols import (
    extract_phase_boundary,
    run_entropy_study,
    run_equilibrium_scan,
    run_hysteresis,
)
from .runspec import RunSpec, RunSpecError, load_runspec

__all__ = ["main"]


def _out_dir(args, spec: RunSpec | None = None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if spec is not None and spec.out_dir:
        return Path(spec.out_dir)
    env = os.environ.get("SQOCTA_OUT")
    return Path(env) if env else Path("sqocta_out")


def _curve_doc(c) -> dict:
    return {
        "gamma": c.gamma,
        "beta": c.beta,
        "rate": c.rate,
        "direction": c.direction,
        "points": [dataclasses.asdict(p) for p in c.points],
    }


def _write_outputs(out: Path, spec: RunSpec, recs, curves=None, extra: dict | None = None):
    out.mkdir(parents=True, exist_ok=True)
    lattice_doc = json.loads(lattice_to_json(build_lattice(spec.plan.lattice)))["spec"]
    header = records.make_header(
        spec_doc=spec.doc,
        seed_map={"run_seed": spec.plan.seed,
                  "streams": "Philox SeedSequence(run_seed, spawn_key=job key)"},
        extra={"experiment": spec.kind, "lattice": lattice_doc},
    )
    if "jsonl" in spec.formats:
        records.write_jsonl(out / "records.jsonl", recs, header)
    if "csv" in spec.formats:
        records.write_csv(out / "records.csv", recs, header)
    with open(out / "summary.csv", "w") as f:
        f.write(records.summarize_records(recs))
    if curves is not None:
        with open(out / "curves.json", "w") as f:
            json.dump({"header": {k: v for k, v in header.items() if k != "timestamp"},
                       "curves": [_curve_doc(c) for c in curves]}, f, indent=1, sort_keys=True)
    for name, doc in (extra or {}).items():
        with open(out / name, "w") as f:
            if name.endswith(".json"):
                json.dump(doc, f, indent=1, sort_keys=True, default=str)
            else:
                f.write(doc)


def _cmd_run(args) -> int:
    try:
        spec = load_runspec(args.spec)
    except FileNotFoundError:
        print(f"error: spec file not found: {args.spec}", file=sys.stderr)
        return 2
    except RunSpecError as e:
        print(f"error: invalid run spec: {e}", file=sys.stderr)
        return 2

    plan = spec.plan
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replicas is not None:
        overrides["replicas"] = args.replicas
    if args.nprocs is not None:
        overrides["nprocs"] = args.nprocs
    if overrides:
        plan = dataclasses.replace(plan, **overrides)
        spec = dataclasses.replace(spec, plan=plan)
    out = _out_dir(args, spec)

    if spec.kind in ("equilibrium", "entropy-study"):
        runner = run_entropy_study if spec.kind == "entropy-study" else run_equilibrium_scan
        curves, recs = runner(plan)
        _write_outputs(out, spec, recs, curves)
    elif spec.kind == "hysteresis":
        curves, recs = run_hysteresis(plan)
        _write_outputs(out, spec, recs, curves)
    elif spec.kind == "phase-diagram":
        curves, recs = run_equilibrium_scan(plan)
        boundary = extract_phase_boundary(curves, criterion=spec.criterion)
        _write_outputs(out, spec, recs, curves,
                       extra={"boundary.json": dataclasses.asdict(boundary)})
    elif spec.kind == "ed-suite":
        report = _ed_suite(spec)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ed_report.json", "w") as f:
            json.dump(report, f, indent=1, sort_keys=True)
    elif spec.kind == "render":
        lat = build_lattice(plan.lattice)
        state = {
            "fim": lambda: fim_configuration(lat),
            "saturated": lambda: saturated_configuration(lat),
            "random": lambda: random_configuration(lat, make_rng(plan.seed)),
        }[spec.render_state]()
        _, svg = render_state_map(lat, state)
        out.mkdir(parents=True, exist_ok=True)
        (out / "state.svg").write_text(svg)
    print(f"wrote outputs to {out}")
    return 0


def _ed_suite(spec: RunSpec) -> dict:
    opts = spec.ed_options or {}
    report: dict = {}

    tri = ed.TriangularGraph.triangle3()
    p0 = EffectiveModelParams(B_eff=6.0, J1_eff=1.0, Gamma_eff=0.0, B_sat_eff=6.0, deltaB_eff=0.0)
    report["triangle3_degeneracy_gamma0"] = ed.diagonalize(tri, p0).ground_degeneracy
    degs = {}
    for g in opts.get("gammas_eff", [0.01, 0.05, 0.1]):
        pg = EffectiveModelParams(B_eff=6.0, J1_eff=1.0, Gamma_eff=g, B_sat_eff=6.0, deltaB_eff=g)
        degs[str(g)] = ed.diagonalize(tri, pg).ground_degeneracy
    report["triangle3_degeneracy_vs_gamma"] = degs

    report["gap_check"] = [dataclasses.asdict(r) for r in ed.perturbative_gap_check(
        opts.get("j0", 1.8), opts.get("gammas", [0.09, 0.18, 0.36]))]

    manifold = {}
    for dims in opts.get("manifold_sizes", [[3, 3], [4, 4], [5, 5], [6, 6]]):
        g = ed.TriangularGraph.periodic(*dims)
        rep = ed.enumerate_ground_manifold(g)
        manifold[f"{dims[0]}x{dims[1]}"] = {
            "colorable": g.is_three_colorable,
            "M_m": rep.M_m,
            "total_states": rep.total_states,
            "size_histogram": {str(k): v for k, v in sorted(rep.size_histogram.items())},
        }
    report["ground_manifold"] = manifold

    g33 = ed.TriangularGraph.periodic(3, 3)
    slope = ed.ramp_slope_check(g33, opts.get("ramp_gamma_eff", 0.1), opts.get("ramp_beta", 20.0))
    report["ramp_slope"] = {"slope": slope.slope, "ratio_to_prediction": slope.ratio,
                            "m_above_saturation": slope.m_above}
    return report


def _cmd_ed(args) -> int:
    if args.system == "triangle3":
        graph = ed.TriangularGraph.triangle3()
        params = EffectiveModelParams(
            B_eff=args.b, J1_eff=1.0, Gamma_eff=args.gamma,
            B_sat_eff=6.0, deltaB_eff=args.gamma,
        )
        spec = ed.diagonalize(graph, params)
    elif args.system.startswith("tri"):
        rows, cols = (int(x) for x in args.system[3:].split("x"))
        graph = ed.TriangularGraph.periodic(rows, cols)
        params = EffectiveModelParams(
            B_eff=args.b, J1_eff=1.0, Gamma_eff=args.gamma,
            B_sat_eff=6.0, deltaB_eff=args.gamma,
        )
        spec = ed.diagonalize(graph, params)
    elif args.system == "chain":
        lat = build_lattice(LatticeSpec(1, 1, args.chain_length, Boundary.OPEN))
        spec = ed.diagonalize(lat, ModelParams(J1=1.0, J0=args.j0, B=args.b,
                                               Gamma=args.gamma, T=1.0))
    else:
        print(f"error: unknown system {args.system!r}", file=sys.stderr)
        return 2
    lows = spec.eigenvalues[: min(8, len(spec.eigenvalues))]
    print("lowest eigenvalues:", " ".join(f"{e:.6f}" for e in lows))
    print("ground degeneracy:", spec.ground_degeneracy)
    print("ground expectations:", json.dumps(spec.ground_expectations, sort_keys=True))
    if args.beta:
        print(f"thermal (beta={args.beta}):", json.dumps(spec.thermal(args.beta), sort_keys=True))
    return 0


def _cmd_render(args) -> int:
    header, recs = records.read_jsonl(args.records)
    with_config = [r for r in recs if "config" in r.metadata]
    if not with_config:
        print("error: no records with embedded configurations", file=sys.stderr)
        return 1
    idx = args.index if args.index is not None else 0
    if not (0 <= idx < len(with_config)):
        print(f"error: index {idx} out of range (have {len(with_config)})", file=sys.stderr)
        return 2
    rec = with_config[idx]
    lat_doc = header.get("lattice")
    if lat_doc is None:
        print("error: records header carries no lattice spec", file=sys.stderr)
        return 1
    lat = build_lattice(LatticeSpec(
        rows=lat_doc["rows"], cols=lat_doc["cols"], chain_length=lat_doc["chain_length"],
        boundary=Boundary(lat_doc["boundary"]), vacancies=frozenset(lat_doc["vacancies"]),
    ))
    vals = np.array([1 if ch == "+" else -1 for ch in rec.metadata["config"]], dtype=np.int8)
    from .classical_mc import SpinConfiguration

    _, svg = render_state_map(lat, SpinConfiguration(vals, lat.tag()))
    out = Path(args.out or "state.svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    print(f"wrote {out}")
    return 0


def _cmd_summarize(args) -> int:
    table = []
    all_recs = []
    for path in args.records:
        reader = records.read_csv if str(path).endswith(".csv") else records.read_jsonl
        _, recs = reader(path)
        all_recs.extend(recs)
    table = records.summarize_records(all_recs)
    if args.out:
        Path(args.out).write_text(table)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sqocta",
                                description="Frustrated square-octagonal spin-chain simulator")
    p.add_argument("--version", action="version", version=f"sqocta {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="execute a JSON run spec")
    pr.add_argument("spec")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--replicas", type=int)
    pr.add_argument("--nprocs", type=int)
    pr.add_argument("--out")
    pr.set_defaults(func=_cmd_run)

    pe = sub.add_parser("ed", help="quick exact-diagonalization queries")
    pe.add_argument("--system", default="triangle3",
                    help="triangle3 | triRxC (e.g. tri3x3) | chain")
    pe.add_argument("--gamma", type=float, default=0.0)
    pe.add_argument("--b", type=float, default=0.0)
    pe.add_argument("--j0", type=float, default=1.8)
    pe.add_argument("--beta", type=float)
    pe.add_argument("--chain-length", type=int, default=4)
    pe.set_defaults(func=_cmd_ed)

    pv = sub.add_parser("render", help="render a recorded state to SVG")
    pv.add_argument("records")
    pv.add_argument("--index", type=int)
    pv.add_argument("--out")
    pv.set_defaults(func=_cmd_render)

    ps = sub.add_parser("summarize", help="aggregate records into a table")
    ps.add_argument("records", nargs="+")
    ps.add_argument("--out")
    ps.set_defaults(func=_cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RunSpecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
