"""Path-integral (discrete imaginary time) Monte Carlo for Gamma > 0.

The quantum model at inverse temperature beta maps onto L_tau coupled
replicas of the classical system: spatial couplings are scaled by
beta/L_tau within each slice and neighboring slices of each site are
coupled ferromagnetically with

    k_tau = -(1/2) ln tanh(beta * Gamma / L_tau) >= 0,

recomputed whenever Gamma or beta changes.  Gamma = 0 has no worldline
representation (k_tau diverges); such runs belong to classical_mc.

Two update families (selectable, never mixed within a run): single-spin
proposals per (slice, site), and collective proposals flipping all spins
of one chain within one slice.  Proposals are accepted with the
heat-bath rule 1/(1 + exp(dS)) (detailed balance w.r.t. the worldline
action; see kernels module for why the bare Metropolis rule is not used
here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels, model, observables
from .classical_mc import SpinConfiguration, make_rng, random_configuration
from .lattice import Lattice
from .model import GAMMA_CUTOFF, ModelParams, Schedule

__all__ = [
    "UpdateFamily",
    "PimcParams",
    "WorldlineConfiguration",
    "k_tau_of",
    "pimc_sweep_single",
    "pimc_sweep_chain",
    "measure_worldline",
    "run_schedule_pimc",
    "qemc_emulation",
]


class UpdateFamily(str, Enum):
    SINGLE_SPIN = "single_spin"
    CHAIN_COLLECTIVE = "chain_collective"


@dataclass(frozen=True)
class PimcParams:
    L_tau: int = 32
    update_family: UpdateFamily = UpdateFamily.SINGLE_SPIN
    measure_cadence: int = 0  # sweeps between mid-run records; 0 = final only

    def __post_init__(self):
        object.__setattr__(self, "update_family", UpdateFamily(self.update_family))
        if self.L_tau < 2:
            raise ValueError("L_tau must be >= 2")


def k_tau_of(beta: float, gamma: float, l_tau: int) -> float:
    """Imaginary-time coupling; diverges as Gamma -> 0."""
    if gamma <= 0:
        raise ValueError(
            "Gamma = 0 has no worldline representation (k_tau diverges); "
            "use sqocta.classical_mc for the classical limit"
        )
    return -0.5 * math.log(math.tanh(beta * gamma / l_tau))


@dataclass
class WorldlineConfiguration:
    """Spins replicated over L_tau periodic imaginary-time slices."""

    slices: np.ndarray  # (L_tau, n_spins) int8
    beta: float
    gamma: float
    lattice_ref: str
    k_tau: float = field(init=False)

    def __post_init__(self):
        self.slices = np.asarray(self.slices, dtype=np.int8)
        if self.slices.ndim != 2:
            raise ValueError("slices must be (L_tau, n_spins)")
        if not np.all(np.abs(self.slices) == 1):
            raise ValueError("spin values must be +/-1")
        self.k_tau = k_tau_of(self.beta, self.gamma, self.L_tau)

    @property
    def L_tau(self) -> int:
        return self.slices.shape[0]

    def set_gamma(self, gamma: float):
        if gamma != self.gamma:
            self.gamma = gamma
            self.k_tau = k_tau_of(self.beta, gamma, self.L_tau)

    @classmethod
    def from_classical(cls, config: SpinConfiguration, l_tau: int, beta: float, gamma: float):
        return cls(
            slices=np.tile(config.values, (l_tau, 1)),
            beta=beta,
            gamma=gamma,
            lattice_ref=config.lattice_ref,
        )

    def project(self, rng: np.random.Generator) -> SpinConfiguration:
        """Majority vote across slices per site; ties broken by fair coin."""
        sums = self.slices.astype(np.int64).sum(axis=0)
        vals = np.sign(sums).astype(np.int8)
        ties = vals == 0
        if ties.any():
            vals[ties] = (rng.integers(0, 2, size=int(ties.sum())) * 2 - 1).astype(np.int8)
        return SpinConfiguration(vals, self.lattice_ref)


_csr_cache: dict[str, tuple] = {}
_chain_cache: dict[str, tuple] = {}


def _csr(lat: Lattice):
    key = lat.tag()
    if key not in _csr_cache:
        _csr_cache[key] = lat.neighbor_csr()
    return _csr_cache[key]


def _chain_arrays(lat: Lattice):
    key = lat.tag()
    if key not in _chain_cache:
        _chain_cache[key] = (lat.chain_spin_matrix(), *lat.chain_external_csr())
    return _chain_cache[key]


def _run_sweeps(state, lat, family, b_arr, j1_arr, j0_arr, gamma, rng):
    """Run one batch of sweeps with per-sweep coupling/field/Gamma arrays."""
    n_sweeps = len(b_arr)
    beta, lt = state.beta, state.L_tau
    a = beta / lt
    gam = np.maximum(gamma, GAMMA_CUTOFF)
    k_tau = -0.5 * np.log(np.tanh(beta * gam / lt))
    a_b = a * b_arr
    a_j1 = a * j1_arr
    a_j0 = a * j0_arr
    if family is UpdateFamily.SINGLE_SPIN:
        fm_ptr, fm_idx, afm_ptr, afm_idx = _csr(lat)
        u = rng.random((n_sweeps, lt, lat.n_spins))
        kernels.pimc_single_run(
            state.slices, fm_ptr, fm_idx, afm_ptr, afm_idx, a_b, a_j1, a_j0, k_tau, u
        )
    else:
        chain_spins, ext_ptr, ext_src, ext_dst = _chain_arrays(lat)
        u = rng.random((n_sweeps, lt, lat.n_chains))
        kernels.pimc_chain_run(
            state.slices, chain_spins, ext_ptr, ext_src, ext_dst, a_b, a_j1, k_tau, u
        )
    state.set_gamma(float(gam[-1]))


def pimc_sweep_single(state: WorldlineConfiguration, lat: Lattice, p: ModelParams,
                      rng: np.random.Generator) -> WorldlineConfiguration:
    """One single-spin sweep (one proposal per slice and site)."""
    _one_sweep(state, lat, p, rng, UpdateFamily.SINGLE_SPIN)
    return state


def pimc_sweep_chain(state: WorldlineConfiguration, lat: Lattice, p: ModelParams,
                     rng: np.random.Generator) -> WorldlineConfiguration:
    """One collective sweep (one whole-chain proposal per slice and chain)."""
    _one_sweep(state, lat, p, rng, UpdateFamily.CHAIN_COLLECTIVE)
    return state


def _one_sweep(state, lat, p, rng, family):
    if p.Gamma <= 0:
        raise ValueError(
            "Gamma = 0 has no worldline representation; use sqocta.classical_mc"
        )
    one = np.ones(1)
    _run_sweeps(state, lat, family, p.B * one, p.J1 * one, p.J0 * one, p.Gamma * one, rng)


def measure_worldline(lat: Lattice, state: WorldlineConfiguration, jcal: float,
                      gamma: float, b_ctl: float) -> dict:
    """Estimators over the worldline: raw sigma-z mean, diagonal (Ising)
    energy, transverse magnetization from the time links, total energy.

    The sigma-x estimator per link is tanh(a*Gamma) for equal neighbors
    along imaginary time and 1/tanh(a*Gamma) for unequal ones, with
    a = beta/L_tau.
    """
    wl = state.slices.astype(np.float64)
    lt = state.L_tau
    mz_raw = float(wl.mean())

    afm = np.asarray(lat.afm_bonds, dtype=np.int64).reshape(-1, 2)
    fm = np.asarray(lat.fm_bonds, dtype=np.int64).reshape(-1, 2)
    e_field = jcal * b_ctl * wl.sum(axis=1)
    e_afm = jcal * (wl[:, afm[:, 0]] * wl[:, afm[:, 1]]).sum(axis=1) if len(afm) else 0.0
    e_fm = (
        jcal * model.COUPLING_RATIO * (wl[:, fm[:, 0]] * wl[:, fm[:, 1]]).sum(axis=1)
        if len(fm)
        else 0.0
    )
    e_diag = float(np.mean(e_field + e_afm - e_fm))

    a_gamma = state.beta * max(gamma, GAMMA_CUTOFF) / lt
    eq = state.slices * np.roll(state.slices, -1, axis=0)
    p_eq = (eq > 0).mean(axis=0)
    th = math.tanh(a_gamma)
    sx_per_site = p_eq * th + (1.0 - p_eq) / th
    sx_total = float(sx_per_site.sum())

    return {
        "mz_raw": mz_raw,
        "e_diag": e_diag,
        "sx_total": sx_total,
        "energy": e_diag - gamma * sx_total,
    }


def _record_worldline(lat, state, jcal, gamma, b_ctl, sweep, base_meta,
                      with_local_entropy=False) -> observables.ObservableRecord:
    """Mid-run record: slice-resolved observables averaged over slices."""
    est = measure_worldline(lat, state, jcal, gamma, b_ctl)
    psis = []
    mfims = []
    mags = []
    for k in range(state.L_tau):
        cfg = state.slices[k]
        psi, m_fim = observables.order_parameter(lat, cfg)
        psis.append(psi)
        mfims.append(m_fim)
        mags.append(observables.magnetization(lat, cfg))
    meta = dict(base_meta)
    meta.update(sweep=int(sweep), H=b_ctl, jcal=jcal, gamma=gamma, projected=False,
                sigma_z_raw=est["mz_raw"], sigma_x_total=est["sx_total"], final=False)
    return observables.ObservableRecord(
        M_over_Msat=float(np.mean(mags)),
        m_fim=float(np.mean(mfims)),
        psi=complex(np.mean(psis)),
        energy_per_spin=est["energy"] / lat.n_spins,
        metadata=meta,
    )


def run_schedule_pimc(
    lat: Lattice,
    sch: Schedule,
    pimc_params: PimcParams,
    run_seed: int,
    *,
    T: float = 1.0 / 4.5,
    stream: tuple[int, ...] = (),
    initial: SpinConfiguration | None = None,
    with_local_entropy: bool = False,
    metadata: dict | None = None,
) -> tuple[list[observables.ObservableRecord], SpinConfiguration]:
    """Drive a Gamma > 0 schedule over the worldlines; quench segments clamp
    Gamma at GAMMA_CUTOFF and the final state is projected to the sigma-z
    basis by per-site majority vote (ties from the run RNG)."""
    if sch.max_gamma() <= 0:
        raise ValueError(
            "schedule never turns on Gamma; use sqocta.classical_mc.run_schedule_classical"
        )
    if T <= 0:
        raise ValueError("T must be positive")
    beta = 1.0 / T
    lt = pimc_params.L_tau
    family = pimc_params.update_family

    rng = make_rng(run_seed, stream)
    cfg0 = initial.copy() if initial is not None else random_configuration(lat, rng)
    cfg0.check(lat)
    j0, g0, b0 = model.schedule_at(sch, 0.0)
    state = WorldlineConfiguration.from_classical(cfg0, lt, beta, max(g0, GAMMA_CUTOFF))

    base_meta = dict(metadata or {})
    base_meta.update(
        source="pimc",
        seed=[run_seed, *stream],
        beta_J1=beta,
        L_tau=lt,
        update_family=family.value,
        gamma_cutoff=GAMMA_CUTOFF,
    )

    total = int(round(sch.total_sweeps))
    cadence = pimc_params.measure_cadence if pimc_params.measure_cadence > 0 else None
    records: list[observables.ObservableRecord] = []

    chunk = max(1, min(256, 2_000_000 // (lt * max(lat.n_spins, 1)) + 1))
    t = 0
    while t < total:
        n = min(chunk, total - t)
        if cadence:
            n = min(n, cadence - (t % cadence) if t % cadence else cadence)
        ctl = model.schedule_controls(sch, t, n)
        jcal, gam, b_ctl = ctl[:, 0], ctl[:, 1], ctl[:, 2]
        _run_sweeps(
            state, lat, family,
            jcal * b_ctl, jcal, jcal * model.COUPLING_RATIO, gam, rng,
        )
        t += n
        if cadence and t % cadence == 0 and t < total:
            j, g, b = model.schedule_at(sch, float(t))
            meta = dict(base_meta)
            meta["k_tau"] = state.k_tau
            records.append(
                _record_worldline(lat, state, j, g, b, t, meta)
            )

    jf, gf, bf = model.schedule_at(sch, float(total))
    final_cfg = state.project(rng)
    energy = model.classical_energy(
        lat, final_cfg, ModelParams(J1=max(jf, 1e-12), B=jf * bf, T=T)
    ) if jf > 0 else 0.0
    meta = dict(base_meta)
    meta.update(sweep=total, H=bf, jcal=jf, gamma=gf, projected=True,
                k_tau=state.k_tau, final=True)
    records.append(
        observables.measure_state(
            lat, final_cfg, energy=energy, with_local_entropy=with_local_entropy,
            metadata=meta,
        )
    )
    return records, final_cfg


def qemc_emulation(
    lat: Lattice,
    p: ModelParams,
    n_steps: int,
    dwell_sweeps: int,
    run_seed: int,
    *,
    l_tau: int = 32,
    ramp_sweeps: int = 200,
    update_family: UpdateFamily = UpdateFamily.SINGLE_SPIN,
    stream: tuple[int, ...] = (),
    initial: SpinConfiguration | None = None,
) -> list[SpinConfiguration]:
    """Chain of reverse anneals: from a classical state, raise Gamma to its
    target, dwell, quench Gamma back and project; repeat n_steps times,
    returning one classical sample per step.  Callers typically discard the
    first half as burn-in.

    A zero ramp height (p.Gamma == 0) makes every step a no-op, so all
    samples equal the seed state (degenerate chain).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = make_rng(run_seed, stream)
    config = initial.copy() if initial is not None else random_configuration(lat, rng)
    config.check(lat)

    if p.Gamma <= 0 or (dwell_sweeps <= 0 and ramp_sweeps <= 0):
        return [config.copy() for _ in range(n_steps)]

    beta = p.beta
    family = UpdateFamily(update_family)
    samples = []
    for _ in range(n_steps):
        state = WorldlineConfiguration.from_classical(config, l_tau, beta, GAMMA_CUTOFF)
        nr = int(ramp_sweeps)
        nd = int(dwell_sweeps)
        gam = np.concatenate([
            np.linspace(GAMMA_CUTOFF, p.Gamma, nr, endpoint=False) if nr else np.zeros(0),
            np.full(nd, p.Gamma),
            np.linspace(p.Gamma, GAMMA_CUTOFF, nr) if nr else np.zeros(0),
        ])
        ones = np.ones_like(gam)
        _run_sweeps(state, lat, family, p.B * ones, p.J1 * ones, p.J0 * ones, gam, rng)
        config = state.project(rng)
        samples.append(config.copy())
    return samples
