"""Square-octagonal spin-chain lattice: construction, validation, JSON I/O.

The lattice is a triangular arrangement of ferromagnetic spin chains
(default 4 spins per chain).  Each pair of adjacent chains is coupled by
exactly one antiferromagnetic bond, so at the chain level the system is a
triangular antiferromagnet while at the spin level the AFM bonds trace the
squares and octagons of the physical graph.

Chains live on axial coordinates (row r, col q).  The six chain-neighbor
directions and the canonical port map (which spin of a chain carries the
AFM bond in each direction) are::

    direction   (dq, dr)   port (0-based spin index nu)
    E           (+1,  0)   1
    W           (-1,  0)   chain_length - 2
    SE          ( 0, +1)   chain_length - 1      (bottom end)
    NW          ( 0, -1)   0                     (top end)
    NE          (+1, -1)   0                     (top end)
    SW          (-1, +1)   chain_length - 1      (bottom end)

End spins carry two AFM endpoints, interior spins one, so every spin has
degree <= 3 (1-2 FM + 1-2 AFM).  The map is translation invariant and is
the single source of truth for the inter-chain bond indexing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "Boundary",
    "LatticeSpec",
    "Chain",
    "Lattice",
    "build_lattice",
    "toy_triangle_spec",
    "validate_lattice",
    "lattice_to_json",
    "lattice_from_json",
]


class Boundary(str, Enum):
    FULLY_PERIODIC = "fully_periodic"
    CYLINDER = "cylinder"  # periodic rows / open columns
    OPEN = "open"


# (dq, dr, out_port_kind); port kinds resolved per chain_length below.
_DIRECTIONS = (
    ("E", 1, 0),
    ("W", -1, 0),
    ("SE", 0, 1),
    ("NW", 0, -1),
    ("NE", 1, -1),
    ("SW", -1, 1),
)
_OPPOSITE = {"E": "W", "W": "E", "SE": "NW", "NW": "SE", "NE": "SW", "SW": "NE"}


def _port(direction: str, chain_length: int) -> int:
    if direction == "E":
        return 1
    if direction == "W":
        return chain_length - 2
    if direction in ("SE", "SW"):
        return chain_length - 1
    return 0  # NW, NE


@dataclass(frozen=True)
class LatticeSpec:
    """Declarative description of one lattice instance."""

    rows: int
    cols: int
    chain_length: int = 4
    boundary: Boundary = Boundary.FULLY_PERIODIC
    vacancies: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "vacancies", frozenset(self.vacancies))
        if self.rows < 1 or self.cols < 1 or self.chain_length < 1:
            raise ValueError("rows, cols and chain_length must be positive")
        for name, n, periodic in (
            ("rows", self.rows, self.rows_periodic),
            ("cols", self.cols, self.cols_periodic),
        ):
            if periodic and n < 3:
                raise ValueError(f"periodic {name} requires {name} >= 3, got {n}")
            # A proper 3-coloring of the triangular chain adjacency only exists
            # when every periodic dimension is a multiple of 3.
            if periodic and n % 3 != 0:
                raise ValueError(
                    f"periodic {name} must be a multiple of 3 for a proper "
                    f"sublattice 3-coloring, got {n}"
                )
        if self.n_chain_sites > 1 and self.chain_length < 4:
            # Six AFM endpoints per chain cannot fit on <4 spins with degree <= 3.
            raise ValueError("chain_length must be >= 4 for coupled-chain lattices")
        bad = [v for v in self.vacancies if not (0 <= v < self.n_chain_sites)]
        if bad:
            raise ValueError(f"vacancy ids out of range: {sorted(bad)}")

    @property
    def rows_periodic(self) -> bool:
        return self.boundary in (Boundary.FULLY_PERIODIC, Boundary.CYLINDER)

    @property
    def cols_periodic(self) -> bool:
        return self.boundary is Boundary.FULLY_PERIODIC

    @property
    def n_chain_sites(self) -> int:
        return self.rows * self.cols

    def tag(self) -> str:
        """Stable identity string used to pair configurations with lattices."""
        vac = ",".join(str(v) for v in sorted(self.vacancies))
        return f"{self.boundary.value}:{self.rows}x{self.cols}x{self.chain_length}:vac[{vac}]"


def toy_triangle_spec(chain_length: int = 4) -> LatticeSpec:
    """Three mutually adjacent chains (one AFM bond per pair): the smallest
    frustrated triangle of chains, as a 3x1 cylinder."""
    return LatticeSpec(rows=3, cols=1, chain_length=chain_length, boundary=Boundary.CYLINDER)


@dataclass(frozen=True)
class Chain:
    site: int  # grid site id r*cols + q (stable under vacancy removal)
    row: int
    col: int
    spins: tuple[int, ...]  # dense spin ids, nu = 0..chain_length-1


@dataclass
class Lattice:
    """Built lattice.  Treat as immutable after construction; it is shared
    read-only by all samplers."""

    spec: LatticeSpec
    chains: list[Chain]
    fm_bonds: list[tuple[int, int]]
    afm_bonds: list[tuple[int, int]]
    sublattice: dict[int, int]  # chain index (position in `chains`) -> color 0/1/2
    n_spins: int
    # derived arrays, built once in build_lattice
    spin_chain: np.ndarray = field(repr=False, default=None)  # spin id -> chain index
    chain_neighbors: list[list[int]] = field(repr=False, default=None)
    bulk_chain_mask: np.ndarray = field(repr=False, default=None)

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def chain_length(self) -> int:
        return self.spec.chain_length

    def tag(self) -> str:
        return self.spec.tag()

    def chain_spin_matrix(self) -> np.ndarray:
        """(n_chains, chain_length) int array of spin ids."""
        return np.array([c.spins for c in self.chains], dtype=np.int64)

    def bulk_spin_mask(self) -> np.ndarray:
        """Boolean mask over spins belonging to bulk (6-neighbor) chains."""
        mask = np.zeros(self.n_spins, dtype=bool)
        for ci, ch in enumerate(self.chains):
            if self.bulk_chain_mask[ci]:
                mask[list(ch.spins)] = True
        return mask

    def neighbor_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Per-spin neighbor lists split by bond kind, as two CSR structures
        (fm_ptr, fm_idx, afm_ptr, afm_idx) for the Monte Carlo kernels."""
        fm_adj = [[] for _ in range(self.n_spins)]
        afm_adj = [[] for _ in range(self.n_spins)]
        for a, b in self.fm_bonds:
            fm_adj[a].append(b)
            fm_adj[b].append(a)
        for a, b in self.afm_bonds:
            afm_adj[a].append(b)
            afm_adj[b].append(a)

        def pack(adj):
            ptr = np.zeros(self.n_spins + 1, dtype=np.int64)
            for i, lst in enumerate(adj):
                ptr[i + 1] = ptr[i] + len(lst)
            idx = np.zeros(ptr[-1], dtype=np.int64)
            for i, lst in enumerate(adj):
                idx[ptr[i] : ptr[i + 1]] = sorted(lst)
            return ptr, idx

        fm_ptr, fm_idx = pack(fm_adj)
        afm_ptr, afm_idx = pack(afm_adj)
        return fm_ptr, fm_idx, afm_ptr, afm_idx

    def chain_external_csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """AFM bonds grouped by chain, for collective chain updates:
        (ptr, src, dst) where src is the in-chain spin and dst the partner."""
        per_chain = [[] for _ in range(self.n_chains)]
        for a, b in self.afm_bonds:
            per_chain[self.spin_chain[a]].append((a, b))
            per_chain[self.spin_chain[b]].append((b, a))
        ptr = np.zeros(self.n_chains + 1, dtype=np.int64)
        for c, lst in enumerate(per_chain):
            ptr[c + 1] = ptr[c] + len(lst)
        src = np.zeros(ptr[-1], dtype=np.int64)
        dst = np.zeros(ptr[-1], dtype=np.int64)
        for c, lst in enumerate(per_chain):
            for k, (a, b) in enumerate(sorted(lst)):
                src[ptr[c] + k] = a
                dst[ptr[c] + k] = b
        return ptr, src, dst


def _grid_adjacency(spec: LatticeSpec):
    """Yield (site, direction, neighbor_site) for every present directed edge."""
    rows, cols = spec.rows, spec.cols
    for r in range(rows):
        for q in range(cols):
            for name, dq, dr in _DIRECTIONS:
                q2, r2 = q + dq, r + dr
                if spec.cols_periodic:
                    q2 %= cols
                elif not (0 <= q2 < cols):
                    continue
                if spec.rows_periodic:
                    r2 %= rows
                elif not (0 <= r2 < rows):
                    continue
                yield r * cols + q, name, r2 * cols + q2


def build_lattice(spec: LatticeSpec) -> Lattice:
    """Build the lattice deterministically from its spec.

    Vacancy chains are removed together with all their incident bonds; spin
    ids are dense over the remaining chains, in grid-site order.
    """
    L = spec.chain_length
    present = [s for s in range(spec.n_chain_sites) if s not in spec.vacancies]
    chain_index = {s: i for i, s in enumerate(present)}

    chains: list[Chain] = []
    for i, s in enumerate(present):
        r, q = divmod(s, spec.cols)
        chains.append(Chain(site=s, row=r, col=q, spins=tuple(i * L + nu for nu in range(L))))
    n_spins = len(chains) * L

    fm_bonds = [
        (c.spins[nu], c.spins[nu + 1]) for c in chains for nu in range(L - 1)
    ]

    afm_bonds: list[tuple[int, int]] = []
    chain_neighbors: list[list[int]] = [[] for _ in chains]
    half = {"E", "SE", "SW"}  # each undirected adjacency visited once
    for s, name, s2 in _grid_adjacency(spec):
        if s in spec.vacancies or s2 in spec.vacancies:
            continue
        i, j = chain_index[s], chain_index[s2]
        chain_neighbors[i].append(j)
        if name in half:
            a = chains[i].spins[_port(name, L)]
            b = chains[j].spins[_port(_OPPOSITE[name], L)]
            afm_bonds.append((a, b))

    sublattice = {i: (c.col - c.row) % 3 for i, c in enumerate(chains)}

    spin_chain = np.repeat(np.arange(len(chains), dtype=np.int64), L)
    bulk = np.array([len(nb) == 6 for nb in chain_neighbors], dtype=bool)

    return Lattice(
        spec=spec,
        chains=chains,
        fm_bonds=fm_bonds,
        afm_bonds=afm_bonds,
        sublattice=sublattice,
        n_spins=n_spins,
        spin_chain=spin_chain,
        chain_neighbors=chain_neighbors,
        bulk_chain_mask=bulk,
    )


def validate_lattice(lat: Lattice) -> list[str]:
    """Check every structural invariant; return human-readable violations
    (empty list = valid).  Report-only: never raises."""
    out: list[str] = []
    spec = lat.spec
    L = spec.chain_length

    if lat.n_spins != len(lat.chains) * L:
        out.append(f"n_spins={lat.n_spins} != n_chains*chain_length={len(lat.chains) * L}")

    # expected chain adjacency from the grid geometry
    chain_index = {c.site: i for i, c in enumerate(lat.chains)}
    expected_pairs = set()
    for s, name, s2 in _grid_adjacency(spec):
        if s in chain_index and s2 in chain_index:
            expected_pairs.add(frozenset((chain_index[s], chain_index[s2])))

    # count AFM bonds per chain pair
    pair_counts: dict[frozenset, int] = {}
    for a, b in lat.afm_bonds:
        if not (0 <= a < lat.n_spins and 0 <= b < lat.n_spins):
            out.append(f"AFM bond ({a},{b}) endpoint out of range")
            continue
        key = frozenset((int(lat.spin_chain[a]), int(lat.spin_chain[b])))
        pair_counts[key] = pair_counts.get(key, 0) + 1
    for pair in expected_pairs:
        got = pair_counts.get(pair, 0)
        if got != 1:
            i, j = sorted(pair)
            out.append(f"chain pair ({i},{j}) has {got} AFM bonds, expected 1")
    for pair, got in pair_counts.items():
        if pair not in expected_pairs:
            i, j = sorted(pair)
            out.append(f"unexpected AFM bond between non-adjacent chains ({i},{j})")

    # FM bonds per chain
    fm_per_chain = np.zeros(len(lat.chains), dtype=int)
    for a, b in lat.fm_bonds:
        ca, cb = int(lat.spin_chain[a]), int(lat.spin_chain[b])
        if ca != cb:
            out.append(f"FM bond ({a},{b}) crosses chains {ca},{cb}")
        else:
            fm_per_chain[ca] += 1
    for i, n in enumerate(fm_per_chain):
        if n != L - 1:
            out.append(f"chain {i} has {n} FM bonds, expected {L - 1}")

    # proper coloring
    for pair in expected_pairs:
        i, j = sorted(pair)
        if lat.sublattice.get(i) == lat.sublattice.get(j):
            out.append(f"adjacent chains ({i},{j}) share sublattice color")

    # spin degree <= 3
    deg = np.zeros(lat.n_spins, dtype=int)
    for a, b in lat.fm_bonds + lat.afm_bonds:
        deg[a] += 1
        deg[b] += 1
    for i in np.nonzero(deg > 3)[0]:
        out.append(f"spin {int(i)} has degree {int(deg[i])} > 3")

    if spec.rows_periodic and spec.cols_periodic and not spec.vacancies:
        if 2 * len(lat.afm_bonds) != 6 * len(lat.chains):
            out.append(
                f"periodic bond count 2*{len(lat.afm_bonds)} != 6*{len(lat.chains)}"
            )
    return out


def lattice_to_json(lat: Lattice) -> str:
    """Canonical JSON document (chains, bonds, coloring) for debugging and
    cross-implementation diffing."""
    doc = {
        "schema_version": 1,
        "spec": {
            "rows": lat.spec.rows,
            "cols": lat.spec.cols,
            "chain_length": lat.spec.chain_length,
            "boundary": lat.spec.boundary.value,
            "vacancies": sorted(lat.spec.vacancies),
        },
        "n_spins": lat.n_spins,
        "chains": [
            {"site": c.site, "row": c.row, "col": c.col, "spins": list(c.spins)}
            for c in lat.chains
        ],
        "fm_bonds": [list(b) for b in lat.fm_bonds],
        "afm_bonds": [list(b) for b in lat.afm_bonds],
        "sublattice": {str(k): v for k, v in sorted(lat.sublattice.items())},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def lattice_from_json(text: str) -> Lattice:
    doc = json.loads(text)
    if doc.get("schema_version") != 1:
        raise ValueError(f"unsupported lattice schema_version {doc.get('schema_version')!r}")
    s = doc["spec"]
    spec = LatticeSpec(
        rows=s["rows"],
        cols=s["cols"],
        chain_length=s["chain_length"],
        boundary=Boundary(s["boundary"]),
        vacancies=frozenset(s["vacancies"]),
    )
    lat = build_lattice(spec)
    rebuilt = json.loads(lattice_to_json(lat))
    for key in ("chains", "fm_bonds", "afm_bonds", "sublattice", "n_spins"):
        if rebuilt[key] != doc[key]:
            raise ValueError(f"lattice document does not match deterministic rebuild ({key})")
    return lat
