"""Experiment drivers: equilibrium scans, hysteresis ladders, phase-boundary
extraction, step/entropy studies.

Plans fan out over (gamma, beta, H, rate, direction, replica) as
independent jobs.  Every job's RNG stream is a pure function of
(plan.seed, job key), so results are reproducible regardless of execution
order or process count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from multiprocessing import Pool

import numpy as np

from . import classical_mc, ed, model, observables, pimc
from .classical_mc import (
    SpinConfiguration,
    make_rng,
    random_configuration,
    saturated_configuration,
)
from .lattice import Lattice, LatticeSpec, build_lattice
from .model import ModelParams, anneal_dwell_schedule, hysteresis_schedule
from .observables import ObservableRecord
from .pimc import PimcParams, UpdateFamily

__all__ = [
    "ExperimentPlan",
    "CurvePoint",
    "Curve",
    "PhaseBoundary",
    "StepReport",
    "run_equilibrium_scan",
    "run_hysteresis",
    "extract_phase_boundary",
    "run_step_structure",
    "run_entropy_study",
]


def _default_h_grid() -> tuple[float, ...]:
    return tuple(round(0.04 * k, 10) for k in range(51))  # 0, 0.04, ..., 2


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one experiment family."""

    engine: str = "classical"  # classical | pimc | ed
    lattice: LatticeSpec = field(default_factory=lambda: LatticeSpec(6, 6, 4))
    gammas: tuple[float, ...] = (0.51, 1.06)
    betas: tuple[float, ...] = (4.5,)
    h_grid: tuple[float, ...] = field(default_factory=_default_h_grid)
    rates: tuple[float, ...] = (1_000.0, 100_000.0, 10_000_000.0)
    directions: tuple[str, ...] = ("up", "down")
    replicas: int = 20
    samples: int = 50  # QEMC samples per replica
    seed: int = 0
    # engine knobs
    l_tau: int = 32
    update_family: str = "single_spin"
    equilibrium_mode: str = "dwell"  # dwell | qemc
    dwell_sweeps: int = 100_000
    anneal_sweeps: int = 10_000
    quench_sweeps: int = 100
    measure_every: int = 500
    measure_fraction: float = 0.5
    qemc_ramp_sweeps: int = 200
    nprocs: int = 1
    record_level: str = "job"  # job | sample | none
    record_states: bool = False  # embed final configurations in records
    with_local_entropy: bool = False

    def __post_init__(self):
        if self.engine not in ("classical", "pimc", "ed"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if not self.gammas or not self.betas or not self.h_grid:
            raise ValueError("gammas, betas and h_grid must be non-empty")
        if list(self.rates) != sorted(self.rates):
            raise ValueError("rates must be sorted ascending")
        for d in self.directions:
            if d not in ("up", "down"):
                raise ValueError(f"unknown direction {d!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.engine == "classical" and any(g != 0 for g in self.gammas):
            object.__setattr__(self, "gammas", tuple(0.0 for _ in self.gammas))

    def build_lattice(self) -> Lattice:
        return build_lattice(self.lattice)


@dataclass
class CurvePoint:
    H: float
    M: float
    M_err: float
    m_fim: float
    m_fim_err: float
    n: int
    chi: float | None = None
    local_entropy: float | None = None
    local_entropy_err: float | None = None
    broken_fraction: float | None = None
    M_values: tuple[float, ...] = ()
    m_fim_values: tuple[float, ...] = ()


@dataclass
class Curve:
    gamma: float
    beta: float
    points: list[CurvePoint]
    rate: float | None = None
    direction: str | None = None

    def hs(self) -> np.ndarray:
        return np.array([p.H for p in self.points])

    def with_chi(self) -> "Curve":
        if len(self.points) >= 3:
            chis = observables.susceptibility([(p.H, p.M) for p in self.points])
            for p, (_, c) in zip(self.points, chis):
                p.chi = c
        return self


def _sem(vals: list[float]) -> float:
    if len(vals) < 2:
        return float("nan")
    return float(np.std(vals, ddof=1) / math.sqrt(len(vals)))


def _aggregate(h: float, jobs: list[dict]) -> CurvePoint:
    ms = [j["M"] for j in jobs]
    fs = [j["m_fim"] for j in jobs]
    ents = [j["local_entropy"] for j in jobs if j.get("local_entropy") is not None]
    broks = [j["broken_fraction"] for j in jobs if j.get("broken_fraction") is not None]
    return CurvePoint(
        H=h,
        M=float(np.mean(ms)),
        M_err=_sem(ms),
        m_fim=float(np.mean(fs)),
        m_fim_err=_sem(fs),
        n=len(jobs),
        local_entropy=float(np.mean(ents)) if ents else None,
        local_entropy_err=_sem(ents) if len(ents) > 1 else None,
        broken_fraction=float(np.mean(broks)) if broks else None,
        M_values=tuple(ms),
        m_fim_values=tuple(fs),
    )


# ---------------------------------------------------------------------------
# Job execution
# ---------------------------------------------------------------------------


def _equilibrium_job(args) -> tuple[tuple, dict, list[ObservableRecord]]:
    plan, key = args
    gi, bi, hi, rep = key
    gamma, beta, h = plan.gammas[gi], plan.betas[bi], plan.h_grid[hi]
    lat = plan.build_lattice()
    stream = (0, gi, bi, hi, rep)
    meta = {
        "H": h, "gamma_over_J1": gamma, "beta_J1": beta, "replica": rep,
        "protocol": "equilibrium", "mode": plan.equilibrium_mode,
    }
    records: list[ObservableRecord] = []

    if plan.engine == "ed":
        p = ModelParams(J1=1.0, B=h, Gamma=gamma, T=1.0 / beta)
        spec = ed.diagonalize(lat, p)
        th = spec.thermal(beta)
        out = {"M": th["M_aligned"], "m_fim": th.get("m_fim", float("nan"))}
        return key, out, records

    if plan.equilibrium_mode == "qemc" and gamma > 0:
        p = ModelParams(J1=1.0, B=h, Gamma=gamma, T=1.0 / beta)
        samples = pimc.qemc_emulation(
            lat, p, plan.samples, plan.dwell_sweeps // max(plan.samples, 1),
            plan.seed, l_tau=plan.l_tau, ramp_sweeps=plan.qemc_ramp_sweeps,
            update_family=UpdateFamily(plan.update_family), stream=stream,
        )
        keep = samples[len(samples) // 2 :]
        sub = []
        for i, s in enumerate(keep):
            r = observables.measure_state(
                lat, s, energy=model.classical_energy(lat, s, p),
                with_local_entropy=plan.with_local_entropy,
                metadata={**meta, "sample": i, "source": "pimc-qemc"},
            )
            sub.append(r)
        out = _reduce_records(sub)
        if plan.record_level == "sample":
            records.extend(sub)
    else:
        sch = anneal_dwell_schedule(h, gamma, plan.anneal_sweeps, plan.dwell_sweeps)
        window_start = plan.anneal_sweeps + plan.dwell_sweeps * (1 - plan.measure_fraction)
        if gamma == 0:
            recs, _ = classical_mc.run_schedule_classical(
                lat, sch, plan.seed, T=1.0 / beta, stream=stream,
                measure_every=plan.measure_every, apply_readout_quench=False,
                with_local_entropy=plan.with_local_entropy, metadata=meta,
            )
        else:
            pp = PimcParams(
                L_tau=plan.l_tau, update_family=UpdateFamily(plan.update_family),
                measure_cadence=plan.measure_every,
            )
            recs, _ = pimc.run_schedule_pimc(
                lat, sch, pp, plan.seed, T=1.0 / beta, stream=stream,
                with_local_entropy=plan.with_local_entropy, metadata=meta,
            )
        sub = [r for r in recs if r.metadata.get("sweep", 0) >= window_start]
        out = _reduce_records(sub)
        if plan.record_level == "sample":
            records.extend(sub)

    if plan.record_level == "job":
        records.append(
            ObservableRecord(
                M_over_Msat=out["M"], m_fim=out["m_fim"], psi=complex(out.get("psi", 0)),
                energy_per_spin=out.get("energy_per_spin", float("nan")),
                local_entropy=out.get("local_entropy"),
                metadata={**meta, "n_measurements": out.get("n", 0), "summary": True,
                          "seed": [plan.seed, *stream]},
            )
        )
    return key, out, records


def _reduce_records(recs: list[ObservableRecord]) -> dict:
    if not recs:
        return {"M": float("nan"), "m_fim": float("nan"), "n": 0}
    ms = [r.M_over_Msat for r in recs]
    fs = [r.m_fim for r in recs]
    es = [r.energy_per_spin for r in recs]
    psis = [r.psi for r in recs]
    ents = [r.local_entropy for r in recs if r.local_entropy is not None]
    broks = [r.metadata.get("broken_chain_fraction") for r in recs]
    broks = [b for b in broks if b is not None]
    return {
        "M": float(np.mean(ms)),
        "m_fim": float(np.mean(fs)),
        "energy_per_spin": float(np.mean(es)),
        "psi": complex(np.mean(psis)),
        "n": len(recs),
        "local_entropy": float(np.mean(ents)) if ents else None,
        "broken_fraction": float(np.mean(broks)) if broks else None,
    }


def _hysteresis_job(args) -> tuple[tuple, dict, list[ObservableRecord]]:
    plan, key = args
    gi, bi, ri, di, hi, rep = key
    gamma, beta = plan.gammas[gi], plan.betas[bi]
    rate, direction, h_f = plan.rates[ri], plan.directions[di], plan.h_grid[hi]
    lat = plan.build_lattice()
    stream = (1, gi, bi, ri, di, hi, rep)
    h0 = 0.0 if direction == "up" else 2.0
    sch = hysteresis_schedule(
        h0, h_f, gamma, rate,
        anneal_sweeps=plan.anneal_sweeps, quench_sweeps=plan.quench_sweeps,
    )
    meta = {
        "H": h_f, "H0": h0, "gamma_over_J1": gamma, "beta_J1": beta,
        "rate_sweeps": rate, "direction": direction, "replica": rep,
        "protocol": "hysteresis",
    }
    if direction == "down":
        initial = saturated_configuration(lat)
    else:
        initial = random_configuration(lat, make_rng(plan.seed, (*stream, 9)))

    if gamma == 0:
        recs, cfg = classical_mc.run_schedule_classical(
            lat, sch, plan.seed, T=1.0 / beta, stream=stream, initial=initial,
            with_local_entropy=plan.with_local_entropy, metadata=meta,
        )
    else:
        pp = PimcParams(L_tau=plan.l_tau, update_family=UpdateFamily(plan.update_family))
        recs, cfg = pimc.run_schedule_pimc(
            lat, sch, pp, plan.seed, T=1.0 / beta, stream=stream, initial=initial,
            with_local_entropy=plan.with_local_entropy, metadata=meta,
        )
    final = [r for r in recs if r.metadata.get("final")][-1]
    final.metadata["seed"] = [plan.seed, *stream]
    if plan.record_states:
        final.metadata["config"] = "".join("+" if v > 0 else "-" for v in cfg.values)
    out = {
        "M": final.M_over_Msat,
        "m_fim": final.m_fim,
        "energy_per_spin": final.energy_per_spin,
        "local_entropy": final.local_entropy,
        "broken_fraction": final.metadata.get("broken_chain_fraction"),
    }
    records = [final] if plan.record_level in ("job", "sample") else []
    return key, out, records


def _run_jobs(jobs, worker, nprocs: int):
    results = {}
    records: list[ObservableRecord] = []
    if nprocs > 1:
        with Pool(processes=nprocs) as pool:
            for key, out, recs in pool.imap_unordered(worker, jobs, chunksize=1):
                results[key] = out
                records.extend(recs)
    else:
        for job in jobs:
            key, out, recs = worker(job)
            results[key] = out
            records.extend(recs)
    # deterministic record order regardless of completion order
    records.sort(key=lambda r: tuple(str(r.metadata.get(k)) for k in
                                     ("protocol", "gamma_over_J1", "beta_J1", "rate_sweeps",
                                      "direction", "H", "replica", "sample", "sweep")))
    return results, records


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------


def run_equilibrium_scan(plan: ExperimentPlan) -> tuple[list[Curve], list[ObservableRecord]]:
    """Per-H equilibrium estimates with replica statistics; susceptibility
    attached from the averaged curve."""
    jobs = [
        (plan, (gi, bi, hi, rep))
        for gi in range(len(plan.gammas))
        for bi in range(len(plan.betas))
        for hi in range(len(plan.h_grid))
        for rep in range(plan.replicas if plan.engine != "ed" else 1)
    ]
    results, records = _run_jobs(jobs, _equilibrium_job, plan.nprocs)
    curves = []
    for gi, gamma in enumerate(plan.gammas):
        for bi, beta in enumerate(plan.betas):
            pts = []
            for hi, h in enumerate(plan.h_grid):
                reps = [results[k] for k in results if k[:3] == (gi, bi, hi)]
                pts.append(_aggregate(h, reps))
            pts.sort(key=lambda p: p.H)
            curves.append(Curve(gamma=gamma, beta=beta, points=pts).with_chi())
    return curves, records


def run_hysteresis(plan: ExperimentPlan) -> tuple[list[Curve], list[ObservableRecord]]:
    """Final-state observables per (H_f, rate, Gamma, direction); each H_f
    is an independent run from the initial field."""
    jobs = [
        (plan, (gi, bi, ri, di, hi, rep))
        for gi in range(len(plan.gammas))
        for bi in range(len(plan.betas))
        for ri in range(len(plan.rates))
        for di in range(len(plan.directions))
        for hi in range(len(plan.h_grid))
        for rep in range(plan.replicas)
    ]
    results, records = _run_jobs(jobs, _hysteresis_job, plan.nprocs)
    curves = []
    for gi, gamma in enumerate(plan.gammas):
        for bi, beta in enumerate(plan.betas):
            for ri, rate in enumerate(plan.rates):
                for di, direction in enumerate(plan.directions):
                    pts = []
                    for hi, h in enumerate(plan.h_grid):
                        reps = [results[k] for k in results if k[:5] == (gi, bi, ri, di, hi)]
                        pts.append(_aggregate(h, reps))
                    pts.sort(key=lambda p: p.H)
                    curves.append(
                        Curve(gamma=gamma, beta=beta, rate=rate, direction=direction,
                              points=pts).with_chi()
                    )
    return curves, records


@dataclass
class PhaseBoundary:
    points: list[dict]  # {gamma, T, H_c, err}
    criterion: float = 0.5


def _crossing(hs: np.ndarray, ms: np.ndarray, level: float) -> float | None:
    """Highest-H downward crossing of the level, linearly interpolated from a
    monotone bracketing pair."""
    for i in range(len(hs) - 2, -1, -1):
        if ms[i] >= level > ms[i + 1] and ms[i] > ms[i + 1]:
            f = (ms[i] - level) / (ms[i] - ms[i + 1])
            return float(hs[i] + f * (hs[i + 1] - hs[i]))
    return None


def extract_phase_boundary(
    curves: list[Curve], criterion: float = 0.5, n_boot: int = 200, boot_seed: int = 0
) -> PhaseBoundary:
    """FIM-PM boundary from the m_FIM crossing; uncertainty from a bootstrap
    over replica values.  Curves with no crossing are omitted with a
    diagnostic entry."""
    points = []
    rng = np.random.default_rng(boot_seed)
    for c in curves:
        hs = c.hs()
        ms = np.array([p.m_fim for p in c.points])
        hc = _crossing(hs, ms, criterion)
        if hc is None:
            points.append({"gamma": c.gamma, "T": 1.0 / c.beta, "H_c": None,
                           "err": None, "note": "no crossing in grid"})
            continue
        boots = []
        vals = [p.m_fim_values for p in c.points]
        if all(len(v) > 1 for v in vals):
            for _ in range(n_boot):
                ms_b = np.array([np.mean(rng.choice(v, size=len(v), replace=True)) for v in vals])
                hb = _crossing(hs, ms_b, criterion)
                if hb is not None:
                    boots.append(hb)
        err = float(np.std(boots)) if len(boots) > 10 else None
        points.append({"gamma": c.gamma, "T": 1.0 / c.beta, "H_c": hc, "err": err})
    return PhaseBoundary(points=points, criterion=criterion)


@dataclass
class StepReport:
    n_steps: int
    step_locations: list[float]  # H of each riser (chi-weighted centroid)
    plateau_spans: list[tuple[float, float]]
    threshold: float


def run_step_structure(curve: Curve, threshold_frac: float = 0.25) -> StepReport:
    """Locate magnetization steps: contiguous runs where the susceptibility
    exceeds threshold_frac of its maximum, separated by plateaus."""
    curve.with_chi()
    hs = curve.hs()
    chi = np.array([p.chi if p.chi is not None else 0.0 for p in curve.points])
    theta = threshold_frac * float(np.max(np.abs(chi))) if len(chi) else 0.0
    risers = np.abs(chi) > theta
    locs, spans = [], []
    i = 0
    while i < len(risers):
        if risers[i]:
            j = i
            while j + 1 < len(risers) and risers[j + 1]:
                j += 1
            w = np.abs(chi[i : j + 1])
            locs.append(float(np.sum(hs[i : j + 1] * w) / np.sum(w)))
            i = j + 1
        else:
            j = i
            while j + 1 < len(risers) and not risers[j + 1]:
                j += 1
            spans.append((float(hs[i]), float(hs[j])))
            i = j + 1
    return StepReport(
        n_steps=len(locs), step_locations=locs, plateau_spans=spans, threshold=theta
    )


def run_entropy_study(plan: ExperimentPlan) -> tuple[list[Curve], list[ObservableRecord]]:
    """Equilibrium scan with the local-entropy counter enabled; the curves
    carry mean swap counts per state with replica spread."""
    return run_equilibrium_scan(replace(plan, with_local_entropy=True))
