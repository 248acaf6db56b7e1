"""Metropolis single-spin sampler for the Gamma = 0 Ising limit.

Proposal order is fixed sequential site order within a sweep; one uniform
is consumed per proposal regardless of the outcome, so trajectories are
bit-reproducible and mirror-symmetric runs consume identical streams.

RNG: numpy Philox (counter-based), keyed by
SeedSequence(run_seed, spawn_key=stream), giving independent documented
streams per (run, replica/job).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, model, observables
from .lattice import Lattice
from .model import ModelParams, Schedule

__all__ = [
    "SpinConfiguration",
    "McChainState",
    "make_rng",
    "random_configuration",
    "saturated_configuration",
    "fim_configuration",
    "metropolis_sweep",
    "readout_quench",
    "run_schedule_classical",
]

_CHUNK = 1024  # sweeps per kernel call; bounds the pre-drawn uniform block


def make_rng(run_seed: int, stream: tuple[int, ...] = ()) -> np.random.Generator:
    """Philox generator for one (run, stream) pair."""
    ss = np.random.SeedSequence(entropy=run_seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SpinConfiguration:
    """One classical +/-1 state over all spins of a lattice."""

    values: np.ndarray
    lattice_ref: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8)
        if not np.all(np.abs(self.values) == 1):
            raise ValueError("spin values must be +/-1")

    def copy(self) -> "SpinConfiguration":
        return SpinConfiguration(self.values.copy(), self.lattice_ref)

    def check(self, lat: Lattice):
        if self.values.shape != (lat.n_spins,):
            raise ValueError(
                f"configuration has {self.values.shape[0]} spins, lattice has {lat.n_spins}"
            )
        if self.lattice_ref != lat.tag():
            raise ValueError(
                f"configuration built for {self.lattice_ref!r}, lattice is {lat.tag()!r}"
            )


def random_configuration(lat: Lattice, rng: np.random.Generator) -> SpinConfiguration:
    vals = rng.integers(0, 2, size=lat.n_spins).astype(np.int8) * 2 - 1
    return SpinConfiguration(vals, lat.tag())


def saturated_configuration(lat: Lattice) -> SpinConfiguration:
    """Fully field-aligned state (raw sigma = -1 everywhere)."""
    return SpinConfiguration(-np.ones(lat.n_spins, dtype=np.int8), lat.tag())


def fim_configuration(lat: Lattice, down_color: int = 0) -> SpinConfiguration:
    """Perfect plateau state: chains of one sublattice anti-aligned with the
    field, the other two aligned."""
    vals = -np.ones(lat.n_spins, dtype=np.int8)
    for ci, ch in enumerate(lat.chains):
        if lat.sublattice[ci] == down_color:
            vals[list(ch.spins)] = 1
    return SpinConfiguration(vals, lat.tag())


@dataclass
class McChainState:
    """State of one Markov chain, resumable and bit-reproducible."""

    config: SpinConfiguration
    params: ModelParams
    rng: np.random.Generator = field(repr=False)
    seed_key: tuple = ()
    sweep_count: int = 0
    sums: np.ndarray = None  # int64[3]: (sum_sigma, sum_AFM, sum_FM)

    @classmethod
    def start(cls, lat: Lattice, params: ModelParams, run_seed: int,
              stream: tuple[int, ...] = (), initial: SpinConfiguration | None = None):
        rng = make_rng(run_seed, stream)
        config = initial.copy() if initial is not None else random_configuration(lat, rng)
        config.check(lat)
        sums = np.array(model.classical_energy_terms(lat, config), dtype=np.int64)
        return cls(config=config, params=params, rng=rng,
                   seed_key=(run_seed, *stream), sums=sums)

    def energy(self) -> float:
        """Exact energy from the integer accumulators."""
        p = self.params
        return p.B * self.sums[0] + p.J1 * self.sums[1] - p.J0 * self.sums[2]


def metropolis_sweep(state: McChainState, lat: Lattice) -> McChainState:
    """One full sweep: n_spins sequential proposals, each accepted with
    min(1, exp(-dE/T)).  Mutates and returns the state."""
    p = state.params
    if p.T <= 0:
        raise ValueError("T must be positive")
    fm_ptr, fm_idx, afm_ptr, afm_idx = _csr(lat)
    beta = p.beta
    u = state.rng.random((1, lat.n_spins))
    kernels.metropolis_run(
        state.config.values, fm_ptr, fm_idx, afm_ptr, afm_idx,
        np.array([beta * p.B]), np.array([beta * p.J1]), np.array([beta * p.J0]),
        u, state.sums,
    )
    state.sweep_count += 1
    return state


_csr_cache: dict[str, tuple] = {}


def _csr(lat: Lattice):
    key = lat.tag()
    if key not in _csr_cache:
        _csr_cache[key] = lat.neighbor_csr()
    return _csr_cache[key]


def readout_quench(lat: Lattice, config: SpinConfiguration, params: ModelParams,
                   sums: np.ndarray | None = None) -> int:
    """Single greedy pass flipping only strictly energy-lowering spins,
    emulating the local relaxation of the readout quench.  Returns the
    number of flips."""
    fm_ptr, fm_idx, afm_ptr, afm_idx = _csr(lat)
    if sums is None:
        sums = np.array(model.classical_energy_terms(lat, config), dtype=np.int64)
    return kernels.greedy_pass(
        config.values, fm_ptr, fm_idx, afm_ptr, afm_idx,
        params.B, params.J1, params.J0, sums,
    )


def run_schedule_classical(
    lat: Lattice,
    sch: Schedule,
    run_seed: int,
    *,
    T: float = 1.0 / 4.5,
    stream: tuple[int, ...] = (),
    initial: SpinConfiguration | None = None,
    measure_every: int | None = None,
    apply_readout_quench: bool = True,
    with_local_entropy: bool = False,
    metadata: dict | None = None,
) -> tuple[list[observables.ObservableRecord], SpinConfiguration]:
    """Drive a Gamma = 0 schedule, recording observables at a fixed cadence;
    the final record is the post-quench readout state.

    Schedules that turn on a transverse field are rejected: use the pimc
    engine for those.
    """
    gmax = sch.max_gamma()
    if gmax > 0:
        raise ValueError(
            f"schedule has Gamma up to {gmax}; the classical engine is Gamma = 0 only "
            "(use sqocta.pimc.run_schedule_pimc)"
        )
    if T <= 0:
        raise ValueError("T must be positive")

    base_meta = dict(metadata or {})
    base_meta.update(
        source="classical",
        seed=[run_seed, *stream],
        beta_J1=1.0 / T,
        gamma_over_J1=0.0,
        readout_quench=apply_readout_quench,
    )

    rng = make_rng(run_seed, stream)
    config = initial.copy() if initial is not None else random_configuration(lat, rng)
    config.check(lat)
    fm_ptr, fm_idx, afm_ptr, afm_idx = _csr(lat)
    sums = np.array(model.classical_energy_terms(lat, config), dtype=np.int64)
    beta = 1.0 / T

    total = int(round(sch.total_sweeps))
    cadence = measure_every if measure_every and measure_every > 0 else None
    records: list[observables.ObservableRecord] = []

    def controls_at(t):
        j, g, b = model.schedule_at(sch, min(float(t), sch.total_sweeps))
        return j, g, b

    def emit(t, final=False):
        j, _, b = controls_at(t)
        energy = float(j * b * sums[0] + j * sums[1] * 1.0 - j * model.COUPLING_RATIO * sums[2])
        meta = dict(base_meta)
        meta.update(sweep=int(t), H=b, jcal=j, final=final)
        records.append(
            observables.measure_state(
                lat, config, energy=energy, with_local_entropy=with_local_entropy,
                metadata=meta,
            )
        )

    if total == 0:
        # zero-duration schedule: a single record of the initial state
        emit(0, final=True)
        return records, config

    t = 0
    while t < total:
        n = min(_CHUNK, total - t)
        if cadence:
            n = min(n, cadence - (t % cadence) if t % cadence else cadence)
        ctl = model.schedule_controls(sch, t, n)
        jcal, b_ctl = ctl[:, 0], ctl[:, 2]
        u = rng.random((n, lat.n_spins))
        kernels.metropolis_run(
            config.values, fm_ptr, fm_idx, afm_ptr, afm_idx,
            beta * jcal * b_ctl, beta * jcal * 1.0, beta * jcal * model.COUPLING_RATIO,
            u, sums,
        )
        t += n
        if cadence and t % cadence == 0 and t < total:
            emit(t)

    emit(total, final=not apply_readout_quench)

    if apply_readout_quench:
        jf, _, bf = controls_at(total)
        flips = readout_quench(
            lat, config, ModelParams(J1=max(jf, 1e-12), B=jf * bf, T=T), sums
        ) if jf > 0 else 0
        base_meta["quench_flips"] = flips
        emit(total, final=True)

    return records, config
