"""Measurements on spin configurations: magnetization, three-sublattice
order parameter, susceptibility, local entropy, state maps.

Alignment convention: the energy's field term is +B*sum(sigma), so at
B > 0 the field favors sigma = -1.  All reported observables are measured
along the applied field: the aligned value of a spin is -sigma, so a
saturated (field-favored) state has M/M_sat = +1 and the plateau states
have aligned up-up-down sublattices with m_FIM = +1.  At B = 0 this is a
pure convention.  Raw sigma-z averages, where needed for closed-form
cross-checks, are named *_raw.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import Lattice

__all__ = [
    "ObservableRecord",
    "StateMap",
    "aligned_values",
    "chain_pseudospins",
    "magnetization",
    "order_parameter",
    "susceptibility",
    "local_entropy",
    "broken_chain_fraction",
    "measure_state",
    "render_state_map",
    "local_maxima",
]

_W1 = cmath.exp(2j * math.pi / 3)
_W2 = cmath.exp(4j * math.pi / 3)


@dataclass
class ObservableRecord:
    """One measurement row.  chi and local_entropy are curve-level /
    optional quantities and may be None."""

    M_over_Msat: float
    m_fim: float
    psi: complex
    energy_per_spin: float
    chi: Optional[float] = None
    local_entropy: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "M_over_Msat": self.M_over_Msat,
            "m_fim": self.m_fim,
            "psi_re": self.psi.real,
            "psi_im": self.psi.imag,
            "energy_per_spin": self.energy_per_spin,
            "chi": self.chi,
            "local_entropy": self.local_entropy,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObservableRecord":
        return cls(
            M_over_Msat=d["M_over_Msat"],
            m_fim=d["m_fim"],
            psi=complex(d["psi_re"], d["psi_im"]),
            energy_per_spin=d["energy_per_spin"],
            chi=d.get("chi"),
            local_entropy=d.get("local_entropy"),
            metadata=d.get("metadata", {}),
        )


def _values(s) -> np.ndarray:
    return np.asarray(getattr(s, "values", s))


def aligned_values(s) -> np.ndarray:
    """Spin values measured along the applied field (+1 = field-aligned)."""
    return -_values(s)


_geom_cache: dict[str, tuple] = {}


def _geometry(lat: Lattice):
    """Cached (chain_spin_matrix, colors, bulk_chain_mask, bulk_spin_mask)."""
    key = lat.tag()
    if key not in _geom_cache:
        colors = np.array([lat.sublattice[i] for i in range(lat.n_chains)])
        _geom_cache[key] = (
            lat.chain_spin_matrix(),
            colors,
            lat.bulk_chain_mask.copy(),
            lat.bulk_spin_mask(),
        )
    return _geom_cache[key]


def _chain_matrix(lat: Lattice) -> np.ndarray:
    return _geometry(lat)[0]


def chain_pseudospins(lat: Lattice, s) -> np.ndarray:
    """Field-aligned mean of each chain's spins; +/-1 for unbroken chains,
    fractional for broken ones."""
    v = aligned_values(s)
    return v[_chain_matrix(lat)].mean(axis=1)


def magnetization(lat: Lattice, s, trim_boundary: bool = True) -> float:
    """M/M_sat along the field, averaged over bulk spins (chains with all
    six neighbors present) when trim_boundary is on."""
    v = aligned_values(s).astype(np.float64)
    if trim_boundary:
        mask = _geometry(lat)[3]
        if mask.any():
            return float(v[mask].mean())
    return float(v.mean())


def order_parameter(lat: Lattice, s, trim_boundary: bool = True) -> tuple[complex, float]:
    """Three-sublattice complex order parameter psi and its normalized cubic
    invariant m_FIM, from field-aligned sublattice means of the chain
    pseudospins."""
    pseudo = chain_pseudospins(lat, s)
    _, colors, bulk_mask, _ = _geometry(lat)
    mask = bulk_mask if trim_boundary else np.ones(lat.n_chains, dtype=bool)
    if trim_boundary and not mask.any():
        mask = np.ones(lat.n_chains, dtype=bool)
    ms = []
    for c in range(3):
        sel = mask & (colors == c)
        ms.append(float(pseudo[sel].mean()) if sel.any() else 0.0)
    psi = (ms[0] + ms[1] * _W1 + ms[2] * _W2) / math.sqrt(3)
    m_fim = -((psi * math.sqrt(3) / 2) ** 3).real
    return psi, m_fim


def susceptibility(curve: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """dM/d(B/B_MAX) along an (H, M/M_sat) curve with B_MAX = 2*J1, i.e.
    d(B/B_MAX) = dH/2.  Central differences inside, one-sided at the ends."""
    if len(curve) < 3:
        raise ValueError("susceptibility needs at least 3 curve points")
    hs = np.array([p[0] for p in curve], dtype=float)
    ms = np.array([p[1] for p in curve], dtype=float)
    if not np.all(np.diff(hs) > 0):
        raise ValueError("H grid must be strictly increasing")
    chi = np.gradient(ms, hs / 2.0)
    return list(zip(hs.tolist(), chi.tolist()))


def broken_chain_fraction(lat: Lattice, s) -> float:
    """Fraction of chains whose spins are not unanimous."""
    v = _values(s)[_chain_matrix(lat)]
    return float((np.abs(v.sum(axis=1)) != lat.chain_length).mean())


def local_entropy(lat: Lattice, s, strict: bool = True) -> tuple[int, int]:
    """Number of states reachable by swapping one field-anti-aligned
    (down) chain with an adjacent aligned (up) chain.

    With strict=True only swaps that exactly preserve the classical
    (Gamma = 0) energy count; the check is done in exact integer
    arithmetic on the full spin lattice, so broken neighbor chains are
    handled without approximation.  Broken chains are excluded from the
    swap count; their number is returned alongside: (count, n_broken).
    """
    v = _values(s).astype(np.int64)
    cm = _chain_matrix(lat)
    sums = v[cm].sum(axis=1)
    unbroken = np.abs(sums) == lat.chain_length
    aligned = -sums  # +L aligned, -L anti-aligned for unbroken chains
    n_broken = int((~unbroken).sum())

    afm = np.asarray(lat.afm_bonds, dtype=np.int64).reshape(-1, 2)
    prod = v[afm[:, 0]] * v[afm[:, 1]] if len(afm) else np.zeros(0, dtype=np.int64)
    bond_chains = (
        np.stack([lat.spin_chain[afm[:, 0]], lat.spin_chain[afm[:, 1]]], axis=1)
        if len(afm)
        else np.zeros((0, 2), dtype=np.int64)
    )
    incident: list[list[int]] = [[] for _ in range(lat.n_chains)]
    for b, (ca, cb) in enumerate(bond_chains):
        incident[ca].append(b)
        incident[cb].append(b)

    count = 0
    for c in range(lat.n_chains):
        if not unbroken[c] or aligned[c] > 0:
            continue  # only down chains move
        for c2 in set(lat.chain_neighbors[c]):
            if not unbroken[c2] or aligned[c2] < 0:
                continue  # target must be an up chain
            if not strict:
                count += 1
                continue
            # Flipping both chains flips the sign of every AFM bond product
            # with exactly one endpoint in {c, c2}; energy is preserved iff
            # those products sum to zero (exact integers).
            delta = 0
            for b in incident[c]:
                ca, cb = bond_chains[b]
                if (ca == c) ^ (cb == c) and c2 not in (ca, cb):
                    delta += int(prod[b])
            for b in incident[c2]:
                ca, cb = bond_chains[b]
                if (ca == c2) ^ (cb == c2) and c not in (ca, cb):
                    delta += int(prod[b])
            if delta == 0:
                count += 1
    return count, n_broken


def measure_state(lat: Lattice, s, *, energy: float | None = None,
                  with_local_entropy: bool = False, trim_boundary: bool = True,
                  metadata: dict | None = None) -> ObservableRecord:
    """Bundle the per-state observables into one record."""
    psi, m_fim = order_parameter(lat, s, trim_boundary=trim_boundary)
    meta = dict(metadata or {})
    meta["broken_chain_fraction"] = broken_chain_fraction(lat, s)
    ent = None
    if with_local_entropy:
        cnt, n_broken = local_entropy(lat, s)
        ent = float(cnt)
        meta["local_entropy_broken_chains"] = n_broken
    return ObservableRecord(
        M_over_Msat=magnetization(lat, s, trim_boundary=trim_boundary),
        m_fim=m_fim,
        psi=psi,
        energy_per_spin=(energy / lat.n_spins) if energy is not None else math.nan,
        local_entropy=ent,
        metadata=meta,
    )


def local_maxima(xs, ys) -> list[tuple[float, float]]:
    """Strict interior local maxima of a sampled curve (plateau-tolerant:
    a flat top counts once, at its left edge)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    out = []
    i = 1
    while i < len(ys) - 1:
        j = i
        while j < len(ys) - 1 and ys[j + 1] == ys[j]:
            j += 1
        if ys[i] > ys[i - 1] and j < len(ys) - 1 and ys[j] > ys[j + 1]:
            out.append((float(xs[i]), float(ys[i])))
        i = j + 1
    return out


# ---------------------------------------------------------------------------
# State maps
# ---------------------------------------------------------------------------


@dataclass
class StateMap:
    """Renderable snapshot: chain markers plus triangular plaquettes."""

    chain_xy: np.ndarray  # (n_chains, 2)
    chain_magnetization: np.ndarray  # field-aligned means in [-1, 1]
    plaquettes: list[tuple[tuple[int, int, int], float, float]]  # (chains, mag, phase)


def _chain_positions(lat: Lattice) -> np.ndarray:
    xy = np.zeros((lat.n_chains, 2))
    for i, c in enumerate(lat.chains):
        xy[i] = (c.col + 0.5 * c.row, c.row * math.sqrt(3) / 2)
    return xy


def _plaquette_triples(lat: Lattice) -> list[tuple[int, int, int]]:
    """Upward and downward chain triangles, skipping wrap-around triples so
    the planar drawing stays local."""
    index = {(c.row, c.col): i for i, c in enumerate(lat.chains)}
    triples = []
    for (r, q), i in sorted(index.items()):
        up = ((r, q + 1), (r + 1, q))
        dn = ((r, q + 1), (r + 1, q), (r + 1, q + 1))
        if up[0] in index and up[1] in index:
            triples.append((i, index[up[0]], index[up[1]]))
        if all(k in index for k in dn):
            triples.append(tuple(index[k] for k in dn))
    return triples


def build_state_map(lat: Lattice, s) -> StateMap:
    pseudo = chain_pseudospins(lat, s)
    colors = np.array([lat.sublattice[i] for i in range(lat.n_chains)])
    plaqs = []
    for tri in _plaquette_triples(lat):
        vals = pseudo[list(tri)]
        mag = float(vals.mean())
        psi_p = sum(v * cmath.exp(2j * math.pi * colors[c] / 3) for c, v in zip(tri, vals))
        phase = float(cmath.phase(psi_p)) if abs(psi_p) > 1e-12 else 0.0
        plaqs.append((tri, mag, phase))
    return StateMap(
        chain_xy=_chain_positions(lat),
        chain_magnetization=pseudo,
        plaquettes=plaqs,
    )


def _hsl(phase: float, mag: float) -> str:
    hue = (math.degrees(phase) + 360.0) % 360.0
    light = 85.0 - 35.0 * (mag + 1.0) / 2.0
    return f"hsl({hue:.1f},75%,{light:.1f}%)"


def _gray(mag: float) -> str:
    level = int(round(235 * (1.0 - (mag + 1.0) / 2.0)))
    return f"rgb({level},{level},{level})"


def render_state_map(lat: Lattice, s, scale: float = 28.0) -> tuple[StateMap, str]:
    """Deterministic SVG: plaquette hue encodes the local pseudospin phase,
    plaquette darkness its magnetization, marker darkness the chain
    magnetization.  Identical inputs produce byte-identical SVG."""
    sm = build_state_map(lat, s)
    xy = sm.chain_xy * scale
    pad = scale
    x0 = xy[:, 0].min() - pad
    y0 = xy[:, 1].min() - pad
    w = xy[:, 0].max() - xy[:, 0].min() + 2 * pad
    h = xy[:, 1].max() - xy[:, 1].min() + 2 * pad

    def pt(i):
        return f"{xy[i, 0] - x0:.2f},{xy[i, 1] - y0:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.2f} {h:.2f}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for tri, mag, phase in sm.plaquettes:
        parts.append(
            f'<polygon points="{pt(tri[0])} {pt(tri[1])} {pt(tri[2])}" '
            f'fill="{_hsl(phase, mag)}" stroke="none"/>'
        )
    r = scale * 0.22
    for i in range(lat.n_chains):
        parts.append(
            f'<circle cx="{xy[i, 0] - x0:.2f}" cy="{xy[i, 1] - y0:.2f}" r="{r:.2f}" '
            f'fill="{_gray(float(sm.chain_magnetization[i]))}" stroke="black" stroke-width="0.5"/>'
        )
    parts.append("</svg>")
    return sm, "\n".join(parts)
