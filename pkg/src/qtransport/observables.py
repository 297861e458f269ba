"""
Observables: remaining population, average dwelling time, and the
momentum picture of an open chain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.linalg.lapack import ztrsyl
from scipy.sparse.linalg import LinearOperator, gmres

from .dynamics import IntegrationError, ModelSpec, NetworkState, _rhs_factory, initial_density
from .lattice import Lattice


class DivergenceError(ArithmeticError):
    """The dwelling time is infinite (undamped modes, e.g. locked states)."""


def _rho(state) -> np.ndarray:
    return state.rho if isinstance(state, NetworkState) else np.asarray(state)


def population(state) -> float:
    """Probability that the excitation is still on the network."""
    return float(np.trace(_rho(state)).real)


# ---------------------------------------------------------------- dwelling time


class _Sylvester:
    """Inverse of ``X -> -i (K X - X K^dagger)`` via one complex Schur
    factorisation of ``K`` and triangular Sylvester solves."""

    def __init__(self, K: np.ndarray):
        self.R, self.Q = sla.schur(K, output="complex")
        self.eigs = np.diag(self.R)

    def undamped(self, tol: float) -> bool:
        return bool(np.any(np.abs(self.eigs.imag) <= tol))

    def solve_schur(self, C: np.ndarray) -> np.ndarray:
        # R Y - Y R^H = C
        Y, scale, info = ztrsyl(self.R, self.R, C, trana="N", tranb="C", isgn=-1)
        if info < 0:
            raise ArithmeticError(f"ztrsyl failed with info={info}")
        return Y / scale

    def diag_solve(self, M: np.ndarray) -> np.ndarray:
        """Real diagonal of the solution for a Hermitian right-hand side."""
        Q = self.Q
        Y = self.solve_schur(1j * (Q.conj().T @ M @ Q))
        return np.real(np.einsum("ca,ca->c", Q @ Y, Q.conj()))

    def diag_solve_population(self, d: int) -> np.ndarray:
        q = self.Q[d].conj()
        Y = self.solve_schur(1j * np.outer(q, q.conj()))
        return np.real(np.einsum("ca,ca->c", self.Q @ Y, self.Q.conj()))


class _EigSylvester:
    """Same inverse through the eigendecomposition ``K = V diag(lam) V^-1``.

    In the eigenbasis the superoperator is diagonal, so every solve is two
    matrix products and an elementwise division. Used only when ``V`` is
    well conditioned.
    """

    def __init__(self, lam, V, W):
        self.eigs = lam
        self.V = V
        self.W = W
        self.D = 1j / (lam[:, None] - lam.conj()[None, :])

    def undamped(self, tol: float) -> bool:
        return bool(np.any(np.abs(self.eigs.imag) <= tol))

    def _diag(self, Y):
        return np.real(np.einsum("ib,ib->i", self.V @ Y, self.V.conj()))

    def diag_solve(self, M: np.ndarray) -> np.ndarray:
        W = self.W
        return self._diag(self.D * (W @ M @ W.conj().T))

    def diag_solve_population(self, d: int) -> np.ndarray:
        w = self.W[:, d]
        return self._diag(self.D * np.outer(w, w.conj()))


_EXPLICIT_MAX = 32
_EIG_COND_MAX = 1e6


def _sylvester_solver(K):
    if np.isfinite(K).all():
        lam, V = np.linalg.eig(K)
        if np.linalg.cond(V) < _EIG_COND_MAX:
            return _EigSylvester(lam, V, np.linalg.inv(V))
    return _Sylvester(K)


def _dwell_resolvent(model: ModelSpec, rho0: np.ndarray) -> float:
    g = model.generator
    if not g.sink.any():
        raise DivergenceError("no sink: the excitation never leaves")
    syl = _sylvester_solver(g.K)
    if syl.undamped(1e-11 * max(1.0, np.abs(g.K).max())):
        raise DivergenceError("undamped modes (locked states) make the dwelling time infinite")
    y0 = syl.diag_solve(-rho0)
    if not g.has_jumps:
        return float(y0.sum())
    S = g.n
    G = g.gain.toarray()

    def explicit():
        T = np.column_stack([syl.diag_solve_population(d) for d in range(S)])
        try:
            return np.linalg.solve(np.eye(S) + T @ G, y0)
        except np.linalg.LinAlgError as exc:
            raise DivergenceError("singular resolvent") from exc

    if S <= _EXPLICIT_MAX:
        return float(explicit().sum())

    def matvec(u):
        return u + syl.diag_solve(np.diag(G @ u))

    op = LinearOperator((S, S), matvec=matvec, dtype=float)
    y, _ = gmres(op, y0, rtol=1e-10, atol=0.0, restart=min(S, 200), maxiter=20)
    # GMRES can stall just above its tolerance on rounding noise, so judge
    # the true residual; fall back to the dense system if it is poor
    if np.linalg.norm(matvec(y) - y0) > 1e-8 * np.linalg.norm(y0):
        y = explicit()
    return float(y.sum())


def _tail_rate(t, P):
    """Exponential decay rate fitted to the last decade of ``P``."""
    Pend = P[-1]
    mask = (P <= 10 * Pend) & (P > 0)
    if mask.sum() < 5:
        mask = np.zeros_like(P, dtype=bool)
        mask[len(P) // 2:] = True
        mask &= P > 0
    slope = np.polyfit(t[mask], np.log(P[mask]), 1)[0]
    return -slope


def _dwell_integrate(model, rho0, rtol=1e-10, atol=1e-13, tail_tol=1e-8, t_first=None, t_limit=1e8):
    g = model.generator
    S = g.n
    rhs = _rhs_factory(g)
    y = np.concatenate([rho0.ravel(), [0.0, 0.0]]).astype(complex)
    t0 = 0.0
    t1 = t_first or 50.0 * max(1.0, S / 10)
    ts, Ps = [0.0], [float(np.trace(rho0).real)]
    while True:
        grid = np.linspace(t0, t1, 201)
        sol = solve_ivp(rhs, (t0, t1), y, method="DOP853", t_eval=grid, rtol=rtol, atol=atol)
        if sol.status != 0:
            raise IntegrationError(sol.message)
        rho = sol.y[: S * S].reshape(S, S, -1)
        P = np.real(np.einsum("iik->k", rho))
        ts.extend(sol.t[1:])
        Ps.extend(P[1:])
        y = sol.y[:, -1]
        total = float(y[S * S + 1].real)
        Pend = Ps[-1]
        if Pend <= 1e-14 * max(total, 1.0):
            return total
        lam = _tail_rate(np.asarray(ts), np.asarray(Ps))
        if lam > 0:
            tail = Pend / lam
            if tail <= tail_tol * total:
                return total + tail
        if t1 >= t_limit:
            raise DivergenceError(f"P(t) = {Pend:.3g} has not decayed by t = {t1:.3g}")
        t0, t1 = t1, 2 * t1


def dwelling_time(model: ModelSpec, initial="uniform", method: str = "resolvent", **kw) -> float:
    """Average dwelling time, the integral of ``P(t)`` over all time.

    Parameters
    ----------
    model : ModelSpec
    initial
        Anything :func:`qtransport.dynamics.initial_density` accepts.
    method : {"resolvent", "integrate"}
        ``resolvent`` solves ``L X = -rho0`` exactly. The coherent part is
        inverted with a Schur-Sylvester solver, which reduces the problem
        to a linear system over site populations. ``integrate`` runs the
        master equation until ``P`` is small and adds an exponential tail
        fitted to the last decade.

    Raises
    ------
    DivergenceError
        If population can stay on the network forever.
    """
    rho0 = initial_density(initial, model.n_sites)
    if method == "resolvent":
        return _dwell_resolvent(model, rho0)
    if method == "integrate":
        if not model.generator.sink.any():
            raise DivergenceError("no sink: the excitation never leaves")
        return _dwell_integrate(model, rho0, **kw)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------- momentum picture


@dataclass(frozen=True, eq=False)
class MomentumBasis:
    """Standing-wave eigenstates of the uniform open chain.

    Column ``n-1`` of :attr:`vectors` is ``sqrt(2/(N+1)) sin(k i)`` with
    ``k = pi n / (N+1)``. Energies and group velocities carry the
    ``(1-p)`` factor fixed at construction.
    """

    N: int
    p: float = 0.0
    J: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")

    @cached_property
    def n(self) -> np.ndarray:
        return np.arange(1, self.N + 1)

    @cached_property
    def k(self) -> np.ndarray:
        return np.pi * self.n / (self.N + 1)

    @cached_property
    def vectors(self) -> np.ndarray:
        i = np.arange(1, self.N + 1)
        return np.sqrt(2.0 / (self.N + 1)) * np.sin(np.outer(i, self.k))

    @cached_property
    def energies(self) -> np.ndarray:
        return -2.0 * (1.0 - self.p) * self.J * np.cos(self.k)

    @cached_property
    def velocities(self) -> np.ndarray:
        return 2.0 * (1.0 - self.p) * self.J * np.abs(np.sin(self.k))


def momentum_basis(lattice, p: float = 0.0, J: float = 1.0) -> MomentumBasis:
    """Momentum basis for a chain (a :class:`Lattice` or its length)."""
    if isinstance(lattice, Lattice):
        if lattice.kind != "chain":
            raise ValueError(f"momentum basis is only defined for open chains, not {lattice.kind}")
        lattice = lattice.n_sites
    return MomentumBasis(int(lattice), float(p), float(J))


def momentum_populations(state, basis: MomentumBasis) -> np.ndarray:
    """``P_k = <k|rho|k>`` for ``n = 1..N`` (entry ``n-1``)."""
    rho = _rho(state)
    if rho.shape != (basis.N, basis.N):
        raise ValueError(f"state has {rho.shape[0]} sites, basis has {basis.N}")
    V = basis.vectors
    return np.real(np.einsum("in,ij,jn->n", V, rho, V))


def group_velocity(basis: MomentumBasis, n: int) -> float:
    if not 1 <= n <= basis.N:
        raise ValueError(f"n must lie in 1..{basis.N}")
    return float(basis.velocities[n - 1])


def momentum_map(rho_series, basis: MomentumBasis) -> np.ndarray:
    """Momentum populations over time, shape ``(N, T)``."""
    rho_series = np.asarray(rho_series)
    V = basis.vectors
    return np.real(np.einsum("in,tij,jn->nt", V, rho_series, V))


def write_momentum_map(path, times, Pk) -> None:
    """CSV with a header row of times (1/J) and one row per ``n``."""
    Pk = np.asarray(Pk)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n"] + [repr(float(t)) for t in times])
        for n in range(Pk.shape[0]):
            w.writerow([n + 1] + [repr(float(v)) for v in Pk[n]])
