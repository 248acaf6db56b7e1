"""Hamiltonian parameters, classical energy, schedules, effective mapping.

Energy convention (fixed throughout the package)::

    E(sigma) = B * sum_i sigma_i
             + J1 * sum_{AFM bonds} sigma_a sigma_b
             - J0 * sum_{FM bonds}  sigma_a sigma_b

with sigma = +/-1.  Note the + sign on the field term: at B > 0 the field
favors sigma = -1.  Observables are reported along the field direction
(see observables module).

Time-dependent runs are driven by a Schedule: piecewise-linear controls
(Jcal, Gamma, B) over a duration measured in Monte Carlo sweeps.  Jcal
scales the whole Ising sector (couplings and field together): the
instantaneous bond couplings are Jcal*I1 (AFM) and Jcal*I0 (FM) with
I0/I1 = 1.8, and the instantaneous Zeeman coefficient is Jcal*B.  The B
control is therefore programmed in full-scale units (numerically B/J1 at
Jcal = 1): an anneal at constant programmed field ramps the physical
field together with the couplings, and a programmed sweep of B at
Jcal = 1 is a plain field sweep.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice

__all__ = [
    "COUPLING_RATIO",
    "ModelParams",
    "EffectiveModelParams",
    "Segment",
    "Schedule",
    "classical_energy",
    "classical_energy_terms",
    "energy_delta_single_flip",
    "map_to_effective",
    "schedule_at",
    "dwell_schedule",
    "anneal_dwell_schedule",
    "hysteresis_schedule",
    "schedule_to_json",
    "schedule_from_json",
]

# J0/J1 = I0/I1, time independent.  1.8 keeps chains unbroken at equilibrium
# while allowing full saturation at H = 2.
COUPLING_RATIO = 1.8

# Smallest Gamma the path-integral engine will run at; quench segments clamp
# to this before projection (recorded in run metadata).
GAMMA_CUTOFF = 1e-3

# Conversion knob for inputs specified in microseconds (labeling aid only).
SWEEPS_PER_MICROSECOND = 10_000


@dataclass(frozen=True)
class ModelParams:
    """Static Hamiltonian parameters, energies in units of J1."""

    J1: float = 1.0
    J0: float | None = None  # defaults to COUPLING_RATIO * J1
    B: float = 0.0
    Gamma: float = 0.0
    T: float = 1.0 / 4.5  # beta*J1 = 4.5 default

    def __post_init__(self):
        if self.J0 is None:
            object.__setattr__(self, "J0", COUPLING_RATIO * self.J1)
        if self.J1 <= 0 or self.J0 <= 0:
            raise ValueError("J1 and J0 must be positive")
        if self.Gamma < 0:
            raise ValueError("Gamma must be >= 0")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def beta(self) -> float:
        return 1.0 / self.T

    @property
    def H(self) -> float:
        """Dimensionless longitudinal field B/J1."""
        return self.B / self.J1

    def with_(self, **kw) -> "ModelParams":
        d = {"J1": self.J1, "J0": self.J0, "B": self.B, "Gamma": self.Gamma, "T": self.T}
        d.update(kw)
        return ModelParams(**d)


@dataclass(frozen=True)
class EffectiveModelParams:
    """Parameters of the effective triangular-lattice model of the chain
    pseudospins, valid for Gamma/J0 << 1."""

    B_eff: float
    J1_eff: float
    Gamma_eff: float
    B_sat_eff: float
    deltaB_eff: float

    def __post_init__(self):
        if abs(self.B_sat_eff - 6.0 * self.J1_eff) > 1e-12 * max(1.0, abs(self.J1_eff)):
            raise ValueError("B_sat_eff must equal 6*J1_eff")


def map_to_effective(p: ModelParams) -> EffectiveModelParams:
    """Map chain-lattice parameters to the effective triangular model:
    B_eff = 4B, J1_eff = J1, Gamma_eff = Gamma^4/J0^3.

    The mapping is perturbative in Gamma/J0; a warning is emitted outside
    Gamma/J0 <= 0.5.
    """
    if p.J0 == 0:
        raise ValueError("J0 must be nonzero")
    if p.Gamma / p.J0 > 0.5:
        warnings.warn(
            f"effective mapping outside validity regime: Gamma/J0 = {p.Gamma / p.J0:.3f} > 0.5",
            stacklevel=2,
        )
    g_eff = p.Gamma**4 / p.J0**3
    return EffectiveModelParams(
        B_eff=4.0 * p.B,
        J1_eff=p.J1,
        Gamma_eff=g_eff,
        B_sat_eff=6.0 * p.J1,
        deltaB_eff=g_eff,
    )


def _values(s) -> np.ndarray:
    v = np.asarray(getattr(s, "values", s))
    return v


def classical_energy_terms(lat: Lattice, s) -> tuple[int, int, int]:
    """Exact integer bond/field sums (sum_sigma, sum_AFM, sum_FM) such that
    E = B*sum_sigma + J1*sum_AFM - J0*sum_FM."""
    v = _values(s).astype(np.int64)
    if v.shape != (lat.n_spins,):
        raise ValueError(f"configuration has {v.shape} values, lattice has {lat.n_spins} spins")
    afm = np.asarray(lat.afm_bonds, dtype=np.int64).reshape(-1, 2)
    fm = np.asarray(lat.fm_bonds, dtype=np.int64).reshape(-1, 2)
    s_sum = int(v.sum())
    afm_sum = int((v[afm[:, 0]] * v[afm[:, 1]]).sum()) if len(afm) else 0
    fm_sum = int((v[fm[:, 0]] * v[fm[:, 1]]).sum()) if len(fm) else 0
    return s_sum, afm_sum, fm_sum


def classical_energy(lat: Lattice, s, p: ModelParams) -> float:
    """Classical (Gamma = 0) energy of one configuration."""
    s_sum, afm_sum, fm_sum = classical_energy_terms(lat, s)
    return p.B * s_sum + p.J1 * afm_sum - p.J0 * fm_sum


def energy_delta_single_flip(lat: Lattice, s, p: ModelParams, spin_id: int) -> float:
    """Energy change from flipping one spin; O(degree) cost."""
    v = _values(s)
    if not (0 <= spin_id < lat.n_spins):
        raise KeyError(f"unknown spin id {spin_id}")
    if v.shape != (lat.n_spins,):
        raise ValueError(f"configuration has {v.shape} values, lattice has {lat.n_spins} spins")
    fm_ptr, fm_idx, afm_ptr, afm_idx = lat.neighbor_csr()
    h_fm = int(v[fm_idx[fm_ptr[spin_id] : fm_ptr[spin_id + 1]]].sum())
    h_afm = int(v[afm_idx[afm_ptr[spin_id] : afm_ptr[spin_id + 1]]].sum())
    return -2.0 * float(v[spin_id]) * (p.B + p.J1 * h_afm - p.J0 * h_fm)


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

_LABELS = ("anneal", "dwell", "sweep", "quench")


@dataclass(frozen=True)
class Segment:
    duration: float  # sweeps, >= 0
    end: tuple[float, float, float]  # (Jcal, Gamma, B) at segment end
    label: str = "dwell"

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment duration must be >= 0")
        if self.label not in _LABELS:
            raise ValueError(f"unknown segment label {self.label!r}")
        object.__setattr__(self, "end", tuple(float(x) for x in self.end))


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear, continuous controls (Jcal, Gamma, B) vs sweep time.
    Each segment ramps linearly from the previous endpoint to its own;
    zero-duration segments may not change the controls (no jumps)."""

    start: tuple[float, float, float]
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(x) for x in self.start))
        object.__setattr__(self, "segments", tuple(self.segments))
        prev = self.start
        for seg in self.segments:
            if seg.duration == 0 and seg.end != prev:
                raise ValueError("zero-duration segment changes controls (discontinuity)")
            prev = seg.end

    @property
    def total_sweeps(self) -> float:
        return sum(seg.duration for seg in self.segments)

    @property
    def end(self) -> tuple[float, float, float]:
        return self.segments[-1].end if self.segments else self.start

    def max_gamma(self) -> float:
        return max([self.start[1]] + [seg.end[1] for seg in self.segments])

    def label_at(self, t: float) -> str:
        t0 = 0.0
        for seg in self.segments:
            if t <= t0 + seg.duration:
                return seg.label
            t0 += seg.duration
        return self.segments[-1].label if self.segments else "dwell"


def schedule_at(sch: Schedule, t: float) -> tuple[float, float, float]:
    """Controls (Jcal, Gamma, B) at sweep time t in [0, total]."""
    if t < 0 or t > sch.total_sweeps:
        raise ValueError(f"t={t} outside schedule [0, {sch.total_sweeps}]")
    prev = sch.start
    t0 = 0.0
    for seg in sch.segments:
        if t <= t0 + seg.duration:
            if seg.duration == 0:
                return seg.end
            f = (t - t0) / seg.duration
            return tuple((1 - f) * a + f * b for a, b in zip(prev, seg.end))
        prev, t0 = seg.end, t0 + seg.duration
    return prev


def dwell_schedule(H: float, gamma: float, sweeps: float) -> Schedule:
    """Hold (Jcal=1, Gamma=gamma, B=H) for a fixed number of sweeps."""
    pt = (1.0, gamma, H)
    return Schedule(start=pt, segments=(Segment(sweeps, pt, "dwell"),))


def anneal_dwell_schedule(
    H: float,
    gamma: float,
    anneal_sweeps: float,
    dwell_sweeps: float,
    gamma_high: float | None = None,
) -> Schedule:
    """Anneal into the target Hamiltonian under a constant programmed field,
    then dwell.

    Classical runs (gamma == 0) ramp Jcal from 0 to 1 (hot -> cold at fixed
    physical temperature).  Quantum runs additionally attenuate Gamma from
    gamma_high (default 2.0) down to its target while Jcal grows.
    """
    if gamma_high is None:
        gamma_high = max(2.0, 2.0 * gamma)
    g0 = gamma_high if gamma > 0 else 0.0
    target = (1.0, gamma, H)
    start = (0.0, g0, H) if anneal_sweeps > 0 else target
    segs = []
    if anneal_sweeps > 0:
        segs.append(Segment(anneal_sweeps, target, "anneal"))
    segs.append(Segment(dwell_sweeps, target, "dwell"))
    return Schedule(start=start, segments=tuple(segs))


def hysteresis_schedule(
    H0: float,
    Hf: float,
    gamma: float,
    rate_sweeps: float,
    anneal_sweeps: float = 10_000,
    quench_sweeps: float = 100,
    gamma_high: float | None = None,
    b_max: float = 2.0,
) -> Schedule:
    """Anneal under B0, sweep the field B0 -> Bf, then quench fluctuations.

    rate_sweeps is the duration of a full-range field sweep, i.e.
    dt/d(B/B_MAX) in sweeps; a partial sweep takes rate_sweeps*|H0-Hf|/b_max.
    The quench ramps Gamma to (near) zero at full Jcal before readout.
    """
    if gamma_high is None:
        gamma_high = max(2.0, 2.0 * gamma)
    g0 = gamma_high if gamma > 0 else 0.0
    sweep_sweeps = rate_sweeps * abs(H0 - Hf) / b_max
    g_end = GAMMA_CUTOFF if gamma > 0 else 0.0
    annealed = (1.0, gamma, H0)
    start = (0.0, g0, H0) if anneal_sweeps > 0 else annealed
    segs = []
    if anneal_sweeps > 0:
        segs.append(Segment(anneal_sweeps, annealed, "anneal"))
    if sweep_sweeps > 0 or H0 == Hf:
        segs.append(Segment(sweep_sweeps, (1.0, gamma, Hf), "sweep"))
    if quench_sweeps > 0:
        segs.append(Segment(quench_sweeps, (1.0, g_end, Hf), "quench"))
    return Schedule(start=start, segments=tuple(segs))


def schedule_controls(sch: Schedule, t0: float, n: int) -> np.ndarray:
    """Controls at the n sweep midpoints t0+1/2 .. t0+n-1/2 as an (n, 3)
    array with columns (Jcal, Gamma, B), by linear interpolation over the
    schedule breakpoints."""
    ts = t0 + 0.5 + np.arange(n)
    t_pts = [0.0]
    vals = [sch.start]
    acc = 0.0
    for seg in sch.segments:
        acc += seg.duration
        t_pts.append(acc)
        vals.append(seg.end)
    t_arr = np.array(t_pts)
    v_arr = np.array(vals)
    out = np.empty((n, 3))
    for j in range(3):
        out[:, j] = np.interp(ts, t_arr, v_arr[:, j])
    return out


def schedule_to_json(sch: Schedule) -> str:
    doc = {
        "schema_version": 1,
        "start": list(sch.start),
        "segments": [
            {"duration": seg.duration, "end": list(seg.end), "label": seg.label}
            for seg in sch.segments
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def schedule_from_json(text: str) -> Schedule:
    doc = json.loads(text)
    if doc.get("schema_version") != 1:
        raise ValueError(f"unsupported schedule schema_version {doc.get('schema_version')!r}")
    return Schedule(
        start=tuple(doc["start"]),
        segments=tuple(
            Segment(seg["duration"], tuple(seg["end"]), seg["label"]) for seg in doc["segments"]
        ),
    )
