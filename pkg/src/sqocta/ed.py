"""Exact diagonalization and exhaustive enumeration for small instances.

Systems: either a chain Lattice (full spin Hamiltonian with FM/AFM bonds,
longitudinal and transverse fields) or an abstract TriangularGraph with
EffectiveModelParams (the pseudospin model).  The triangular graph is
deliberately decoupled from the chain lattice so the effective physics is
testable without chain internals.

Dense full spectra up to 14 spins (a 2^16 dense spectrum does not fit in
memory on small machines); ground-state-only iterative mode up to 24.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import Lattice
from .model import EffectiveModelParams, ModelParams

__all__ = [
    "TriangularGraph",
    "DenseSpectrum",
    "GroundManifoldReport",
    "build_hamiltonian",
    "diagonalize",
    "enumerate_ground_manifold",
    "perturbative_gap_check",
    "GapCheckRow",
    "ramp_slope_check",
    "RampSlopeReport",
]

DENSE_LIMIT = 14
ITERATIVE_LIMIT = 24
DEGENERACY_RTOL = 1e-9  # eigenvalues within 1e-9*||H|| are one level


# ---------------------------------------------------------------------------
# Abstract triangular graph (effective model)
# ---------------------------------------------------------------------------

_TRI_OFFSETS = ((1, 0), (0, 1), (-1, 1))  # E, SE, SW half-directions


@dataclass
class TriangularGraph:
    """Periodic triangular lattice of pseudospins; bonds carry multiplicity
    (small tori wrap several directions onto the same site pair, keeping
    six bond endpoints per site)."""

    n_sites: int
    bonds: list[tuple[int, int]]
    coloring: np.ndarray | None
    label: str

    @classmethod
    def periodic(cls, rows: int, cols: int) -> "TriangularGraph":
        if rows < 2 or cols < 2:
            raise ValueError("periodic triangular graph needs rows, cols >= 2")
        n = rows * cols
        bonds = []
        for r in range(rows):
            for q in range(cols):
                for dq, dr in _TRI_OFFSETS:
                    q2, r2 = (q + dq) % cols, (r + dr) % rows
                    bonds.append((r * cols + q, r2 * cols + q2))
        if rows % 3 == 0 and cols % 3 == 0:
            coloring = np.array([(q - r) % 3 for r in range(rows) for q in range(cols)])
        else:
            coloring = _search_coloring(n, bonds)
        return cls(n_sites=n, bonds=bonds, coloring=coloring, label=f"tri{rows}x{cols}")

    @classmethod
    def triangle3(cls) -> "TriangularGraph":
        """Three-site quotient of the triangular lattice: pairwise bonds with
        multiplicity 3, so every site keeps its six bond endpoints and the
        saturation-field degeneracy is exact."""
        bonds = []
        for i in range(3):
            bonds += [(i, (i + 1) % 3), (i, (i + 2) % 3), (i, (i + 1) % 3)]
        return cls(n_sites=3, bonds=bonds, coloring=np.array([0, 1, 2]), label="triangle3")

    @property
    def is_three_colorable(self) -> bool:
        return self.coloring is not None

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n_sites)]
        for a, b in self.bonds:
            if a != b:
                adj[a].add(b)
                adj[b].add(a)
        return adj


def _search_coloring(n: int, bonds: list[tuple[int, int]]) -> np.ndarray | None:
    """Exact backtracking proper 3-coloring of the simple graph; None if
    none exists."""
    adj = [set() for _ in range(n)]
    for a, b in bonds:
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    colors = -np.ones(n, dtype=int)

    def bt(i: int) -> bool:
        if i == n:
            return True
        used = {colors[j] for j in adj[i] if colors[j] >= 0}
        for c in range(3):
            if c not in used:
                colors[i] = c
                if bt(i + 1):
                    return True
                colors[i] = -1
        return False

    return colors.copy() if bt(0) else None


# ---------------------------------------------------------------------------
# Hamiltonian construction
# ---------------------------------------------------------------------------


def _sigma_columns(n: int) -> np.ndarray:
    """(2^n, n) matrix of sigma-z values; bit i of the basis index set
    means sigma_i = +1."""
    states = np.arange(1 << n, dtype=np.int64)
    return ((states[:, None] >> np.arange(n)) & 1).astype(np.int8) * 2 - 1


def build_hamiltonian(system, params) -> sp.csr_matrix:
    """Sparse Hamiltonian in the sigma-z basis.

    system: Lattice with ModelParams, or TriangularGraph with
    EffectiveModelParams.
    """
    if isinstance(system, Lattice):
        if not isinstance(params, ModelParams):
            raise TypeError("Lattice systems take ModelParams")
        n = system.n_spins
        bonds = [(a, b, params.J1) for a, b in system.afm_bonds]
        bonds += [(a, b, -params.J0) for a, b in system.fm_bonds]
        b_field, gamma = params.B, params.Gamma
    elif isinstance(system, TriangularGraph):
        if not isinstance(params, EffectiveModelParams):
            raise TypeError("TriangularGraph systems take EffectiveModelParams")
        n = system.n_sites
        bonds = [(a, b, params.J1_eff) for a, b in system.bonds]
        b_field, gamma = params.B_eff, params.Gamma_eff
    else:
        raise TypeError(f"unsupported system type {type(system).__name__}")

    if n > ITERATIVE_LIMIT:
        raise ValueError(f"{n} spins exceeds the ED limit of {ITERATIVE_LIMIT}")

    dim = 1 << n
    sig = _sigma_columns(n).astype(np.float64)
    diag = b_field * sig.sum(axis=1)
    for a, b, j in bonds:
        diag += j * sig[:, a] * sig[:, b]

    h = sp.diags(diag, format="lil", dtype=np.float64)
    if gamma != 0.0:
        states = np.arange(dim, dtype=np.int64)
        rows = np.repeat(states, n)
        cols = (states[:, None] ^ (1 << np.arange(n))).ravel()
        h = h.tocsr() + sp.csr_matrix(
            (-gamma * np.ones(dim * n), (rows, cols)), shape=(dim, dim)
        )
    return h.tocsr()


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


@dataclass
class DenseSpectrum:
    """Spectrum plus basis-diagonal observables for thermal averages."""

    eigenvalues: np.ndarray
    degeneracies: list[tuple[float, int]]
    ground_expectations: dict
    n_spins: int
    mode: str  # "dense" | "ground"
    _vectors: np.ndarray = field(repr=False, default=None)
    _diag_ops: dict = field(repr=False, default_factory=dict)

    @property
    def ground_degeneracy(self) -> int:
        return self.degeneracies[0][1]

    def thermal(self, beta: float) -> dict:
        """Boltzmann-weighted expectations over the full spectrum."""
        if self.mode != "dense":
            raise ValueError("thermal expectations need a dense (full) spectrum")
        e = self.eigenvalues
        w = np.exp(-beta * (e - e[0]))
        z = w.sum()
        out = {"energy": float((e * w).sum() / z)}
        probs = np.abs(self._vectors) ** 2  # (dim, nstates)
        for name, diag in self._diag_ops.items():
            per_state = probs.T @ diag
            out[name] = float((per_state * w).sum() / z)
        return out


def _group_degeneracies(evals: np.ndarray, hnorm: float) -> list[tuple[float, int]]:
    tol = max(DEGENERACY_RTOL * hnorm, 1e-300)
    groups: list[tuple[float, int]] = []
    for e in evals:
        if groups and abs(e - groups[-1][0]) <= tol:
            groups[-1] = (groups[-1][0], groups[-1][1] + 1)
        else:
            groups.append((float(e), 1))
    return groups


def _diag_observables(system) -> dict[str, np.ndarray]:
    """Basis-diagonal observables: field-aligned magnetization per spin and,
    where a 3-coloring is available, m_FIM."""
    if isinstance(system, Lattice):
        n = system.n_spins
        sig = _sigma_columns(n).astype(np.float64)
        out = {
            "sigma_z": sig.mean(axis=1),
            "M_aligned": -sig.mean(axis=1),
        }
        if system.n_chains >= 3:
            pseudo = -sig[:, system.chain_spin_matrix()].mean(axis=2)  # (dim, chains)
            colors = np.array([system.sublattice[i] for i in range(system.n_chains)])
            out["m_fim"] = _mfim_from_sublattices(pseudo, colors)
        return out
    n = system.n_sites
    sig = _sigma_columns(n).astype(np.float64)
    out = {"sigma_z": sig.mean(axis=1), "M_aligned": -sig.mean(axis=1)}
    if system.coloring is not None:
        out["m_fim"] = _mfim_from_sublattices(-sig, np.asarray(system.coloring))
    return out


def _mfim_from_sublattices(aligned: np.ndarray, colors: np.ndarray) -> np.ndarray:
    ms = [aligned[:, colors == c].mean(axis=1) for c in range(3)]
    psi = (ms[0] + ms[1] * np.exp(2j * math.pi / 3) + ms[2] * np.exp(4j * math.pi / 3)) / math.sqrt(3)
    return -np.real((psi * math.sqrt(3) / 2) ** 3)


def diagonalize(system, params, mode: str = "dense", k: int = 6) -> DenseSpectrum:
    """Exact spectrum of the specified Hamiltonian.

    mode="dense": full spectrum (n <= 14).  mode="ground": lowest-k levels
    by Lanczos (n <= 24); thermal expectations unavailable there.
    """
    n = system.n_spins if isinstance(system, Lattice) else system.n_sites
    h = build_hamiltonian(system, params)
    hnorm = float(abs(h).sum(axis=1).max())  # inf-norm upper bound

    if mode == "dense":
        if n > DENSE_LIMIT:
            raise ValueError(f"dense mode limited to {DENSE_LIMIT} spins, got {n}")
        evals, evecs = np.linalg.eigh(h.toarray())
    elif mode == "ground":
        kk = min(k, (1 << n) - 2)
        evals, evecs = spla.eigsh(h, k=kk, which="SA")
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    diag_ops = _diag_observables(system)
    groups = _group_degeneracies(evals, hnorm)

    d0 = groups[0][1]
    probs0 = np.abs(evecs[:, :d0]) ** 2
    ground = {
        name: float(np.mean(probs0.T @ op)) for name, op in diag_ops.items()
    }
    ground["energy"] = float(evals[0])

    return DenseSpectrum(
        eigenvalues=evals,
        degeneracies=groups,
        ground_expectations=ground,
        n_spins=n,
        mode=mode,
        _vectors=evecs,
        _diag_ops=diag_ops,
    )


# ---------------------------------------------------------------------------
# Ground-manifold enumeration
# ---------------------------------------------------------------------------


@dataclass
class GroundManifoldReport:
    """Histogram of the saturation-field ground manifold by magnetization."""

    magnetization_histogram: dict[float, int]  # M/M_sat -> count
    size_histogram: dict[int, int]  # k (down spins) -> count
    M_m: float  # argmax-count magnetization
    total_states: int
    n_sites: int


def enumerate_ground_manifold(dims_or_graph, b_at_sat: bool = True) -> GroundManifoldReport:
    """Count the admissible states at the saturation field: configurations
    whose field-anti-aligned (down) spins are pairwise non-adjacent on the
    triangular lattice, histogrammed by M/M_sat = 1 - 2k/n.

    The enumeration is exhaustive over admissible states (backtracking that
    visits each independent set exactly once).  With b_at_sat=False the
    adjacency constraint is dropped and all 2^n states are counted
    (binomial histogram), as a null reference.
    """
    if isinstance(dims_or_graph, TriangularGraph):
        graph = dims_or_graph
    else:
        rows, cols = dims_or_graph
        graph = TriangularGraph.periodic(rows, cols)
    n = graph.n_sites
    if n > 36:
        raise ValueError(f"exhaustive enumeration limited to 36 sites, got {n}")

    size_hist: dict[int, int] = {}
    if not b_at_sat:
        for kk in range(n + 1):
            size_hist[kk] = math.comb(n, kk)
    else:
        masks = np.zeros(n, dtype=np.int64)
        for a, nbrs in enumerate(graph.adjacency()):
            m = 0
            for b in nbrs:
                m |= 1 << b
            masks[a] = m
        counts = np.zeros(n + 1, dtype=np.int64)
        # DFS over (next site, blocked mask, chosen count)
        stack = [(0, 0, 0)]
        while stack:
            i, blocked, kk = stack.pop()
            if i == n:
                counts[kk] += 1
                continue
            stack.append((i + 1, blocked, kk))  # exclude site i
            if not (blocked >> i) & 1:
                stack.append((i + 1, blocked | int(masks[i]), kk + 1))
        size_hist = {kk: int(c) for kk, c in enumerate(counts) if c > 0}

    mag_hist = {1.0 - 2.0 * kk / n: c for kk, c in size_hist.items()}
    # argmax count; ties resolved toward the higher magnetization
    m_m = max(sorted(mag_hist, reverse=True), key=lambda m: mag_hist[m])
    return GroundManifoldReport(
        magnetization_histogram=mag_hist,
        size_histogram=size_hist,
        M_m=m_m,
        total_states=sum(size_hist.values()),
        n_sites=n,
    )


# ---------------------------------------------------------------------------
# Perturbative checks
# ---------------------------------------------------------------------------


@dataclass
class GapCheckRow:
    gamma: float
    tunneling: float  # half the lowest-doublet splitting from ED
    prediction: float  # Gamma^4 / J0^3
    rel_deviation: float


def perturbative_gap_check(j0: float, gammas, chain_length: int = 4) -> list[GapCheckRow]:
    """Effective tunneling of one isolated FM chain vs the quartic
    prediction.

    The two lowest chain states are the symmetric/antisymmetric mixtures of
    the fully aligned states, split by twice the tunneling amplitude; the
    reported tunneling is half the ED splitting, to be compared against
    Gamma^4/J0^3.
    """
    from .lattice import Boundary, LatticeSpec, build_lattice

    lat = build_lattice(
        LatticeSpec(rows=1, cols=1, chain_length=chain_length, boundary=Boundary.OPEN)
    )
    rows = []
    for g in gammas:
        if g == 0:
            rows.append(GapCheckRow(gamma=0.0, tunneling=0.0, prediction=0.0, rel_deviation=0.0))
            continue
        spec = diagonalize(lat, ModelParams(J1=1.0, J0=j0, B=0.0, Gamma=g, T=1.0))
        tun = 0.5 * (spec.eigenvalues[1] - spec.eigenvalues[0])
        pred = g**chain_length / j0 ** (chain_length - 1)
        rows.append(
            GapCheckRow(
                gamma=float(g),
                tunneling=float(tun),
                prediction=float(pred),
                rel_deviation=float(abs(tun - pred) / pred),
            )
        )
    return rows


@dataclass
class RampSlopeReport:
    slope: float  # d(M/M_sat)/dB_eff fitted over the ramp
    ratio: float  # slope * 3*Gamma_eff (order 1 when the prediction holds)
    b_grid: np.ndarray
    m_curve: np.ndarray
    m_above: float  # M/M_sat at B_sat + 3*Gamma_eff


def ramp_slope_check(
    graph: TriangularGraph, gamma_eff: float, beta: float, n_points: int = 9
) -> RampSlopeReport:
    """Magnetization ramp of the effective model just below saturation.

    Fits d(M/M_sat)/dB_eff over B_eff in [B_sat - 2*Gamma_eff, B_sat] at low
    temperature and compares with the 1/(3*Gamma_eff) prediction.
    """
    if graph.n_sites > 12:
        raise ValueError("ramp check limited to 12 sites")
    if gamma_eff <= 0:
        raise ValueError("gamma_eff must be positive (the classical ramp is a step)")
    b_sat = 6.0
    bs = np.linspace(b_sat - 2.0 * gamma_eff, b_sat, n_points)
    ms = []
    for b in bs:
        p = EffectiveModelParams(
            B_eff=float(b), J1_eff=1.0, Gamma_eff=gamma_eff, B_sat_eff=6.0, deltaB_eff=gamma_eff
        )
        spec = diagonalize(graph, p)
        ms.append(spec.thermal(beta)["M_aligned"])
    ms = np.array(ms)
    slope = float(np.polyfit(bs, ms, 1)[0])
    p_above = EffectiveModelParams(
        B_eff=b_sat + 3.0 * gamma_eff, J1_eff=1.0, Gamma_eff=gamma_eff,
        B_sat_eff=6.0, deltaB_eff=gamma_eff,
    )
    m_above = diagonalize(graph, p_above).thermal(beta)["M_aligned"]
    return RampSlopeReport(
        slope=slope,
        ratio=slope * 3.0 * gamma_eff,
        b_grid=bs,
        m_curve=ms,
        m_above=float(m_above),
    )
