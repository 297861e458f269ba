"""
Hamiltonians, eigenstructure and locked-state detection.

A locked state is a Hamiltonian eigenvector with zero amplitude on every
exit site. Population in the span of such vectors never reaches the sink
when there is no noise, so ``P(t)`` saturates at a finite value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import Lattice


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """Tight-binding Hamiltonian on a lattice.

    ``H = sum_i eps_i |i><i| - sum_<i,j> J_ij (|i><j| + |j><i|)``.
    ``edge_couplings`` is aligned with ``lattice.edges``.
    """

    lattice: Lattice
    J_eff: float
    site_energies: np.ndarray
    edge_couplings: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.site_energies, dtype=float)
        Jij = np.asarray(self.edge_couplings, dtype=float)
        if eps.shape != (self.lattice.n_sites,):
            raise ValueError("site_energies must have one entry per site")
        if Jij.shape != (len(self.lattice.edges),):
            raise ValueError("edge_couplings must have one entry per edge")
        object.__setattr__(self, "site_energies", eps)
        object.__setattr__(self, "edge_couplings", Jij)

    @classmethod
    def regular(cls, lattice: Lattice, J_eff: float) -> "HamiltonianSpec":
        return cls(
            lattice,
            float(J_eff),
            np.zeros(lattice.n_sites),
            np.full(len(lattice.edges), float(J_eff)),
        )

    @property
    def is_regular(self) -> bool:
        return not self.site_energies.any() and np.all(self.edge_couplings == self.J_eff)

    def matrix(self) -> np.ndarray:
        S = self.lattice.n_sites
        H = np.diag(self.site_energies)
        if self.lattice.edges:
            e = np.asarray(self.lattice.edges) - 1
            H[e[:, 0], e[:, 1]] -= self.edge_couplings
            H[e[:, 1], e[:, 0]] -= self.edge_couplings
        return H.reshape(S, S)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix(), 2))


def eigensystem(hspec: HamiltonianSpec):
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns)."""
    return np.linalg.eigh(hspec.matrix())


def _clusters(energies, tol):
    groups, start = [], 0
    for k in range(1, len(energies) + 1):
        if k == len(energies) or energies[k] - energies[k - 1] >= tol:
            groups.append(slice(start, k))
            start = k
    return groups


@dataclass
class LockingReport:
    """Result of :func:`locked_states`.

    ``clusters`` lists one ``(energy, multiplicity, locked)`` triple per
    group of (numerically) degenerate eigenvalues.
    """

    locked_dimension: int
    locked_basis: np.ndarray
    exits: tuple
    clusters: list = field(default_factory=list)
    eigtol: float = 0.0
    amptol: float = 0.0

    def projector(self) -> np.ndarray:
        return self.locked_basis @ self.locked_basis.conj().T

    def to_dict(self) -> dict:
        return {
            "locked_dimension": self.locked_dimension,
            "exits": list(self.exits),
            "eigtol": self.eigtol,
            "amptol": self.amptol,
            "clusters": [
                {"energy": float(E), "multiplicity": int(m), "locked": int(k)}
                for E, m, k in self.clusters
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def locked_states(hspec: HamiltonianSpec, exits=None, eigtol: float = 1e-8, amptol: float = 1e-7):
    """Find the subspace of eigenstates with no weight on the exits.

    Eigenvalues closer than ``eigtol * ||H||`` are grouped into one
    degenerate cluster. Inside a cluster the exit-row block of the
    eigenvectors is decomposed by SVD; right singular vectors whose
    singular value is at most ``amptol`` span the locked directions.
    This does not depend on how the eigensolver rotated vectors inside
    a degenerate cluster.

    Parameters
    ----------
    hspec : HamiltonianSpec
    exits : sequence of int, optional
        1-based exit sites. Defaults to ``hspec.lattice.exits``.
    eigtol : float
        Relative degeneracy tolerance.
    amptol : float
        Absolute amplitude threshold on the exit sites.
    """
    exits = tuple(hspec.lattice.exits if exits is None else sorted(int(x) for x in exits))
    if not exits:
        raise ValueError("at least one exit site is required")
    S = hspec.lattice.n_sites
    x = np.asarray(exits) - 1
    E, V = eigensystem(hspec)
    tol = eigtol * max(hspec.norm(), 1.0)
    locked, clusters = [], []
    for sl in _clusters(E, tol):
        Vc = V[:, sl]
        m = Vc.shape[1]
        s, vh = np.linalg.svd(Vc[x, :], full_matrices=True)[1:]
        rank = int(np.sum(s > amptol))
        k = m - rank
        if k:
            locked.append(Vc @ vh[rank:].conj().T)
        clusters.append((float(E[sl].mean()), m, k))
    basis = np.hstack(locked) if locked else np.zeros((S, 0))
    return LockingReport(basis.shape[1], basis, exits, clusters, eigtol, amptol)


def locking_probability(report: LockingReport, initial) -> float:
    """Weight of an initial state inside the locked subspace.

    ``initial`` may be a density matrix, a state vector, or anything
    :func:`qtransport.dynamics.initial_density` accepts. For the uniform
    mixture this is the mean of the per-site projections.
    """
    from .dynamics import initial_density

    S = report.locked_basis.shape[0]
    if report.locked_dimension == 0:
        return 0.0
    if isinstance(initial, np.ndarray) and initial.ndim == 1:
        if initial.shape != (S,):
            raise ValueError("state vector does not match the lattice size")
        rho = np.outer(initial, initial.conj())
    else:
        rho = initial_density(initial, S)
    B = report.locked_basis
    return float(np.real(np.trace(B.conj().T @ rho @ B)))


def perturb(hspec: HamiltonianSpec, magnitude: float, seed=None) -> HamiltonianSpec:
    """Add uniform disorder in ``[-magnitude, magnitude] * J`` to every
    site energy and coupling.

    ``J`` is taken as ``|hspec.J_eff|``. Couplings that would land on
    zero are redrawn.
    """
    if magnitude <= 0:
        raise ValueError("magnitude must be positive")
    if hspec.J_eff == 0:
        raise ValueError("cannot scale disorder by a zero coupling")
    rng = np.random.default_rng(seed)
    scale = magnitude * abs(hspec.J_eff)
    eps = hspec.site_energies + rng.uniform(-scale, scale, hspec.lattice.n_sites)
    Jij = hspec.edge_couplings + rng.uniform(-scale, scale, len(hspec.edge_couplings))
    bad = np.abs(Jij) < 1e-12 * max(abs(hspec.J_eff), 1.0)
    while bad.any():
        Jij[bad] = hspec.edge_couplings[bad] + rng.uniform(-scale, scale, bad.sum())
        bad = np.abs(Jij) < 1e-12 * max(abs(hspec.J_eff), 1.0)
    return HamiltonianSpec(hspec.lattice, hspec.J_eff, eps, Jij)
