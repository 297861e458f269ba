"""
Regular network topologies with designated exit sites.

Sites are numbered 1..S. Two-dimensional lattices are numbered row-major,
so the site in row ``r`` and column ``c`` (both 0-based) of an ``N x M``
lattice is ``r * M + c + 1``. The lattice constant is fixed to 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

KINDS = ("chain", "ring", "square", "rectangle", "torus")
ONE_D = ("chain", "ring")
EXIT_SPECS = ("end", "corner", "perimeter", "all-sites-averaged")

ExitSpec = Union[str, Sequence[int]]


@dataclass(frozen=True)
class Lattice:
    """Immutable lattice topology.

    Attributes
    ----------
    kind : str
        One of ``chain``, ``ring``, ``square``, ``rectangle``, ``torus``.
    dims : tuple of int
        ``(N,)`` for 1D kinds, ``(N, M)`` (rows, columns) for 2D kinds.
    edges : tuple of (int, int)
        Undirected nearest-neighbour bonds, 1-based, each stored as
        ``(i, j)`` with ``i < j`` and sorted lexicographically.
    exits : tuple of int
        Sites coupled to the sink, sorted.
    """

    kind: str
    dims: tuple
    edges: tuple
    exits: tuple
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        S = int(np.prod(self.dims))
        seen = set()
        for i, j in self.edges:
            if not (1 <= i <= S and 1 <= j <= S) or i == j:
                raise ValueError(f"invalid edge ({i}, {j}) for {S} sites")
            if i > j or (i, j) in seen:
                raise ValueError(f"edge ({i}, {j}) is duplicated or not normalised")
            seen.add((i, j))
        if not self.exits:
            raise ValueError("a lattice needs at least one exit site")
        if any(not 1 <= x <= S for x in self.exits):
            raise ValueError(f"exit sites {self.exits} outside 1..{S}")
        if len(set(self.exits)) != len(self.exits):
            raise ValueError("duplicate exit sites")

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    @property
    def sites(self) -> range:
        return range(1, self.n_sites + 1)

    @property
    def z(self) -> int:
        """Coordination constant used to normalise the hopping rate."""
        return 2 if self.kind in ONE_D else 4

    @property
    def shape(self) -> tuple:
        return tuple(self.dims)

    @cached_property
    def _adjacency(self) -> np.ndarray:
        S = self.n_sites
        A = np.zeros((S, S))
        for i, j in self.edges:
            A[i - 1, j - 1] = A[j - 1, i - 1] = 1.0
        A.setflags(write=False)
        return A

    def adjacency(self, sparse: bool = False):
        """0/1 adjacency matrix (0-based indices)."""
        if sparse:
            return sp.csr_matrix(self._adjacency)
        return self._adjacency

    def degrees(self) -> np.ndarray:
        return self._adjacency.sum(axis=1).astype(int)

    def neighbors(self, site: int) -> list:
        return neighbors(self, site)

    def exit_index(self) -> np.ndarray:
        """0-based positions of the exit sites."""
        return np.asarray(self.exits, dtype=int) - 1

    def site(self, row: int, col: int = 0) -> int:
        if self.kind in ONE_D:
            return row + 1
        return row * self.dims[1] + col + 1

    def coords(self, site: int) -> tuple:
        if self.kind in ONE_D:
            return (site - 1,)
        return divmod(site - 1, self.dims[1])

    def corners(self) -> tuple:
        if self.kind in ONE_D:
            return tuple(sorted({1, self.n_sites}))
        N, M = self.dims
        return tuple(sorted({self.site(r, c) for r in (0, N - 1) for c in (0, M - 1)}))

    def perimeter(self) -> tuple:
        if self.kind == "chain":
            return self.corners()
        if self.kind in ("ring", "torus"):
            raise ValueError(f"a {self.kind} has no perimeter")
        N, M = self.dims
        return tuple(
            self.site(r, c)
            for r in range(N)
            for c in range(M)
            if r in (0, N - 1) or c in (0, M - 1)
        )

    def with_exits(self, exits) -> "Lattice":
        return Lattice(self.kind, self.dims, self.edges, tuple(sorted(int(x) for x in exits)), self.a)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dims": list(self.dims),
            "edges": [list(e) for e in self.edges],
            "exits": list(self.exits),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Lattice":
        return cls(
            d["kind"],
            tuple(int(x) for x in d["dims"]),
            tuple((int(i), int(j)) for i, j in d["edges"]),
            tuple(int(x) for x in d["exits"]),
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "Lattice":
        return cls.from_dict(json.loads(text))


def _normalise_dims(kind, dims) -> tuple:
    if np.isscalar(dims):
        dims = (int(dims),)
    dims = tuple(int(d) for d in dims)
    if any(d <= 0 for d in dims):
        raise ValueError(f"dimensions must be positive, got {dims}")
    if kind in ONE_D:
        if len(dims) != 1:
            raise ValueError(f"{kind} takes a single length, got {dims}")
    else:
        if len(dims) == 1:
            dims = (dims[0], dims[0])
        if len(dims) != 2:
            raise ValueError(f"{kind} takes N or (N, M), got {dims}")
        if kind == "square" and dims[0] != dims[1]:
            raise ValueError(f"square lattice needs equal sides, got {dims}")
    if kind == "ring" and dims[0] < 3:
        raise ValueError("a ring needs at least 3 sites")
    if kind == "torus" and min(dims) < 3:
        raise ValueError("a torus needs at least 3 sites along each direction")
    return dims


def _edges(kind, dims) -> tuple:
    edges = set()

    def add(i, j):
        edges.add((min(i, j), max(i, j)))

    if kind in ONE_D:
        (N,) = dims
        for i in range(1, N):
            add(i, i + 1)
        if kind == "ring":
            add(N, 1)
    else:
        N, M = dims
        wrap = kind == "torus"
        for r in range(N):
            for c in range(M):
                s = r * M + c + 1
                if c + 1 < M or wrap:
                    add(s, r * M + (c + 1) % M + 1)
                if r + 1 < N or wrap:
                    add(s, ((r + 1) % N) * M + c + 1)
    return tuple(sorted(edges))


def build(kind: str, dims, exit_spec: ExitSpec = "end"):
    """Build a lattice of the given kind.

    Parameters
    ----------
    kind : str
        ``chain``, ``ring``, ``square``, ``rectangle`` or ``torus``.
    dims : int or tuple of int
        Chain/ring length, or ``(N, M)`` rows and columns. A single
        integer for a 2D kind means ``N x N``.
    exit_spec : str or sequence of int
        ``"end"`` (site N of a chain or ring), ``"corner"`` (site 1 of a
        2D lattice), ``"perimeter"`` (every boundary site), an explicit
        list of sites, or ``"all-sites-averaged"``.

    Returns
    -------
    Lattice, or list of Lattice for ``"all-sites-averaged"`` (one per
    possible exit position, for averaging downstream).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown lattice kind {kind!r}; expected one of {KINDS}")
    dims = _normalise_dims(kind, dims)
    edges = _edges(kind, dims)
    S = int(np.prod(dims))
    if isinstance(exit_spec, str):
        if exit_spec == "end":
            if kind not in ONE_D:
                raise ValueError("exit 'end' is only defined for chain and ring")
            exits = (S,)
        elif exit_spec == "corner":
            if kind in ONE_D:
                raise ValueError("exit 'corner' is only defined for 2D lattices")
            exits = (1,)
        elif exit_spec == "perimeter":
            proto = Lattice(kind, dims, edges, (1,))
            exits = proto.perimeter()
        elif exit_spec == "all-sites-averaged":
            return [Lattice(kind, dims, edges, (x,)) for x in range(1, S + 1)]
        else:
            raise ValueError(f"unknown exit spec {exit_spec!r}")
    else:
        exits = tuple(sorted(int(x) for x in exit_spec))
    return Lattice(kind, dims, edges, exits)


def neighbors(lattice: Lattice, site: int) -> list:
    """Sites sharing a bond with ``site``, in increasing order."""
    if not 1 <= site <= lattice.n_sites:
        raise ValueError(f"unknown site {site}")
    row = lattice._adjacency[site - 1]
    return [int(j) + 1 for j in np.flatnonzero(row)]
