"""
Master-equation dynamics of a single excitation on a lattice.

In the single-excitation sector every channel of the model splits into

* a non-Hermitian no-jump generator ``K = H - (i/2) diag(loss)``, and
* a population feed ``gain`` that moves weight from site ``j`` to site
  ``i`` after a classical hop or a dephasing event.

The density matrix then obeys::

    drho/dt = -i (K rho - rho K^dagger) + diag(gain @ diag(rho))

and the sink removes ``sum_x Gamma rho_xx`` per unit time into the
ground state. Classical hopping (CH) contributes ``pJ/z`` per directed
bond; pure dephasing (PD) damps every coherence between two distinct sites
at rate ``pJ`` and leaves populations alone.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import DOP853, RK23, RK45

from .lattice import Lattice
from .spectral import HamiltonianSpec

NOISE_KINDS = ("CH", "PD")
# dense matmul beats CSR for small systems
_SPARSE_ABOVE = 64


class IntegrationError(RuntimeError):
    """The adaptive integrator failed (step-size underflow or tolerance)."""


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Lattice, coupling and noise parameters.

    Parameters
    ----------
    lattice : Lattice
    p : float
        Classical weight in [0, 1]. The coherent coupling is ``(1-p) J``.
    J : float
        Coupling strength; all rates are in units of ``J``.
    noise : {"CH", "PD"}
    Gamma : float
        Sink rate on every exit site.
    hamiltonian : HamiltonianSpec, optional
        Replaces the regular ``-(1-p) J`` hopping Hamiltonian, e.g. with a
        disordered one from :func:`qtransport.spectral.perturb`.
    """

    lattice: Lattice
    p: float = 0.0
    J: float = 1.0
    noise: str = "CH"
    Gamma: float = 3.0
    hamiltonian: Optional[HamiltonianSpec] = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.J <= 0:
            raise ValueError(f"J must be positive, got {self.J}")
        if self.Gamma < 0:
            raise ValueError(f"Gamma must be non-negative, got {self.Gamma}")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if self.hamiltonian is not None and self.hamiltonian.lattice.n_sites != self.lattice.n_sites:
            raise ValueError("hamiltonian does not match the lattice")

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    def with_p(self, p: float) -> "ModelSpec":
        return dataclasses.replace(self, p=float(p))

    def hamiltonian_spec(self) -> HamiltonianSpec:
        if self.hamiltonian is not None:
            return self.hamiltonian
        return HamiltonianSpec.regular(self.lattice, (1.0 - self.p) * self.J)

    @cached_property
    def generator(self) -> "Generator":
        return Generator.from_model(self)


@dataclass(frozen=True, eq=False)
class Generator:
    """Split form of the master equation (see module docstring)."""

    H: np.ndarray
    loss: np.ndarray
    sink: np.ndarray
    gain: sp.csr_matrix

    @classmethod
    def from_model(cls, model: ModelSpec) -> "Generator":
        lat = model.lattice
        S = lat.n_sites
        H = model.hamiltonian_spec().matrix()
        sink = np.zeros(S)
        sink[lat.exit_index()] = model.Gamma
        pJ = model.p * model.J
        if model.noise == "CH":
            rate = pJ / lat.z
            gain = sp.csr_matrix(rate * lat.adjacency())
            noise_loss = rate * lat.degrees()
        else:
            gain = sp.identity(S, format="csr") * pJ
            noise_loss = np.full(S, pJ)
        return cls(H, noise_loss + sink, sink, gain)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @cached_property
    def K(self) -> np.ndarray:
        return self.H - 0.5j * np.diag(self.loss)

    @cached_property
    def K_op(self):
        """``K`` in whichever storage is faster to multiply by."""
        if self.n > _SPARSE_ABOVE:
            return sp.csr_matrix(self.K)
        return self.K

    @cached_property
    def has_jumps(self) -> bool:
        return self.gain.nnz > 0 and bool(np.any(self.gain.data))


@dataclass(frozen=True)
class InitialState:
    """How the excitation is injected.

    Use the constructors :meth:`site`, :meth:`uniform` or
    :meth:`explicit`. ``site`` is 1-based.
    """

    kind: str
    index: Optional[int] = None
    matrix: Optional[np.ndarray] = dataclasses.field(default=None, compare=False)

    @classmethod
    def site(cls, i: int) -> "InitialState":
        return cls("site", index=int(i))

    @classmethod
    def uniform(cls) -> "InitialState":
        return cls("uniform")

    @classmethod
    def explicit(cls, rho) -> "InitialState":
        return cls("explicit", matrix=np.array(rho, dtype=complex))

    def density(self, n_sites: int) -> np.ndarray:
        if self.kind == "uniform":
            return np.eye(n_sites, dtype=complex) / n_sites
        if self.kind == "site":
            if not 1 <= self.index <= n_sites:
                raise ValueError(f"site {self.index} outside 1..{n_sites}")
            rho = np.zeros((n_sites, n_sites), dtype=complex)
            rho[self.index - 1, self.index - 1] = 1.0
            return rho
        if self.kind == "explicit":
            rho = np.asarray(self.matrix, dtype=complex)
            if rho.shape != (n_sites, n_sites):
                raise ValueError(f"initial density has shape {rho.shape}, expected {(n_sites, n_sites)}")
            NetworkState(rho, 1.0 - float(np.trace(rho).real), 0.0).validate()
            return rho
        raise ValueError(f"unknown initial state kind {self.kind!r}")


def initial_density(initial, n_sites: int) -> np.ndarray:
    """Density matrix for an :class:`InitialState`, a 1-based site
    number, the string ``"uniform"`` or an explicit matrix."""
    if isinstance(initial, InitialState):
        return initial.density(n_sites)
    if isinstance(initial, str):
        if initial != "uniform":
            raise ValueError(f"unknown initial state {initial!r}")
        return InitialState.uniform().density(n_sites)
    if isinstance(initial, (int, np.integer)):
        return InitialState.site(int(initial)).density(n_sites)
    return InitialState.explicit(initial).density(n_sites)


@dataclass
class NetworkState:
    """Density matrix over sites, the population already absorbed by the
    sink, and the time (units 1/J)."""

    rho: np.ndarray
    exited: float = 0.0
    time: float = 0.0

    @property
    def population(self) -> float:
        return float(np.trace(self.rho).real)

    def validate(self, tol_tr: float = 1e-8, tol_psd: float = 1e-8) -> None:
        rho = self.rho
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("rho must be square")
        if not np.allclose(rho, rho.conj().T, atol=tol_psd, rtol=0):
            raise ValueError("rho is not Hermitian")
        lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if lo < -tol_psd:
            raise ValueError(f"rho has a negative eigenvalue {lo:.3e}")
        total = self.population + self.exited
        if abs(total - 1.0) > tol_tr:
            raise ValueError(f"trace(rho) + exited = {total!r}, expected 1")


def liouvillian_apply(model: ModelSpec, rho) -> np.ndarray:
    """Right-hand side ``-i[H, rho] + L rho + L_x rho`` restricted to the
    single-excitation block."""
    g = model.generator
    rho = np.asarray(rho)
    if rho.shape != (g.n, g.n):
        raise ValueError(f"rho has shape {rho.shape}, model has {g.n} sites")
    K = g.K
    out = -1j * (K @ rho - rho @ K.conj().T)
    out[np.diag_indices(g.n)] += g.gain @ np.diagonal(rho)
    return out


def _rhs_factory(g: Generator):
    S = g.n
    S2 = S * S
    K = g.K_op
    gain = g.gain
    sink = g.sink
    diag = np.diag_indices(S)
    jumps = g.has_jumps

    def rhs(t, y):
        rho = y[:S2].reshape(S, S)
        kr = K @ rho
        d = -1j * (kr - kr.conj().T)
        pops = rho.diagonal().real
        if jumps:
            d[diag] += gain @ pops
        dy = np.empty_like(y)
        dy[:S2] = d.ravel()
        dy[S2] = sink @ pops
        dy[S2 + 1] = pops.sum()
        return dy

    return rhs


@dataclass
class TimeSeries:
    """Output of :func:`propagate`.

    ``integral[k]`` is the running integral of ``P`` up to ``t[k]``;
    ``exited`` is integrated independently from the sink flux, so
    ``P + exited`` is a genuine conservation check.
    """

    model: ModelSpec
    t: np.ndarray
    P: np.ndarray
    exited: np.ndarray
    integral: np.ndarray
    populations: np.ndarray
    rho: Optional[np.ndarray] = None

    def state(self, k: int) -> NetworkState:
        if self.rho is None:
            raise ValueError("states were not stored; propagate with store_states=True")
        return NetworkState(self.rho[k], float(self.exited[k]), float(self.t[k]))

    def states(self) -> list:
        return [self.state(k) for k in range(len(self.t))]

    def to_csv(self, path, sites: bool = False) -> None:
        """Write ``t,P,exited`` (plus ``pop_i`` columns if ``sites``).
        Times are in 1/J."""
        S = self.populations.shape[1]
        header = ["t", "P", "exited"] + ([f"pop_{i}" for i in range(1, S + 1)] if sites else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self.t)):
                row = [self.t[k], self.P[k], self.exited[k]]
                if sites:
                    row.extend(self.populations[k])
                w.writerow([repr(float(v)) for v in row])


def propagate(
    model: ModelSpec,
    initial,
    t_max: float,
    t_eval=None,
    n_out: int = 201,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    method: str = "DOP853",
    store_states: bool = True,
) -> TimeSeries:
    """Integrate the master equation from ``initial`` up to ``t_max``.

    Parameters
    ----------
    model : ModelSpec
    initial
        Anything accepted by :func:`initial_density`.
    t_max : float
        Final time in units of 1/J.
    t_eval : array_like, optional
        Output times; defaults to ``n_out`` equally spaced points.
    rtol, atol : float
        Integrator tolerances.
    store_states : bool
        Keep the full density matrix at every output time. Populations,
        ``P`` and ``exited`` are always kept.

    Raises
    ------
    IntegrationError
        When the integrator gives up.
    """
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    g = model.generator
    S = g.n
    rho0 = initial_density(initial, S)
    t_eval = np.linspace(0.0, t_max, n_out) if t_eval is None else np.asarray(t_eval, dtype=float)
    y0 = np.concatenate([rho0.ravel(), [1.0 - np.trace(rho0).real, 0.0]]).astype(complex)
    diag = np.arange(S) * (S + 1)

    def keep(y):
        # only the populations and the two counters unless states are wanted
        return y.copy() if store_states else np.concatenate([y[diag], y[S * S:]])

    t_out, Y = integrate_to(_rhs_factory(g), y0, t_eval, rtol, atol, method, keep)
    if store_states:
        rho = Y[:, : S * S].reshape(-1, S, S)
        pops = np.real(np.einsum("kii->ki", rho))
    else:
        rho = None
        pops = Y[:, :S].real
    return TimeSeries(
        model=model,
        t=t_out,
        P=pops.sum(axis=1),
        exited=Y[:, -2].real,
        integral=Y[:, -1].real,
        populations=pops,
        rho=rho,
    )


def integrate_to(rhs, y0, t_eval, rtol, atol, method="DOP853", keep=None, max_step=np.inf):
    """Step an explicit Runge-Kutta solver through ``t_eval``.

    Equivalent to ``solve_ivp(..., t_eval=t_eval)``, but only ``keep(y)``
    is retained at each output time, so memory does not grow with the
    number of outputs. Returns ``(t_eval, stacked kept values)``.

    Raises
    ------
    IntegrationError
        When the solver fails.
    """
    keep = keep or (lambda y: y.copy())
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size == 0 or t_eval[0] < 0 or np.any(np.diff(t_eval) < 0):
        raise ValueError("t_eval must be a non-empty, non-decreasing array of times >= 0")
    solvers = {"DOP853": DOP853, "RK45": RK45, "RK23": RK23}
    if method not in solvers:
        raise ValueError(f"method must be one of {sorted(solvers)}, got {method!r}")
    t_end = float(t_eval[-1])
    out = []
    k = 0
    while k < t_eval.size and t_eval[k] == 0.0:
        out.append(keep(y0))
        k += 1
    if k < t_eval.size:
        solver = solvers[method](rhs, 0.0, y0, t_end, rtol=rtol, atol=atol, max_step=max_step)
        while k < t_eval.size:
            msg = solver.step()
            if solver.status == "failed":
                raise IntegrationError(msg or "step size underflow")
            j = k
            while j < t_eval.size and t_eval[j] <= solver.t:
                j += 1
            if j > k:
                interp = solver.dense_output()
                for tt in t_eval[k:j]:
                    out.append(keep(solver.y if tt == solver.t else interp(tt)))
                k = j
            if solver.status == "finished" and k < t_eval.size:
                raise IntegrationError("solver finished before the last output time")
    return t_eval, np.array(out)


def kraus_operators(model: ModelSpec, dt: float) -> list:
    """First-order Kraus set of the noise channel over a step ``dt``.

    CH: ``E0 = 1 - (dt/2) sum_i (pJ/z) deg(i) |i><i|`` and
    ``E_ij = sqrt(pJ dt / z) |i><j|`` for every directed bond.
    PD: ``E0 = (1 - pJ dt/2) 1`` and ``E_i = sqrt(pJ dt) |i><i|``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    lat = model.lattice
    S = lat.n_sites
    pJ = model.p * model.J
    ops = []
    if model.noise == "CH":
        rate = pJ / lat.z
        ops.append(np.diag(1.0 - 0.5 * rate * dt * lat.degrees()).astype(complex))
        if rate > 0:
            amp = np.sqrt(rate * dt)
            for i, j in lat.edges:
                for a, b in ((i, j), (j, i)):
                    E = np.zeros((S, S), dtype=complex)
                    E[a - 1, b - 1] = amp
                    ops.append(E)
    else:
        ops.append((1.0 - 0.5 * pJ * dt) * np.eye(S, dtype=complex))
        if pJ > 0:
            amp = np.sqrt(pJ * dt)
            for i in range(S):
                E = np.zeros((S, S), dtype=complex)
                E[i, i] = amp
                ops.append(E)
    return ops


def kraus_step(model: ModelSpec, rho, dt: float) -> np.ndarray:
    """One split step: unitary, then the first-order noise Kraus map,
    then the exact sink map. Agrees with the master equation to
    ``O(dt^2)`` per step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = model.generator
    rho = np.asarray(rho, dtype=complex)
    U = sla.expm(-1j * g.H * dt)
    rho = U @ rho @ U.conj().T
    ops = kraus_operators(model, dt)
    E0 = ops[0]
    out = E0 @ rho @ E0.conj().T
    if model.noise == "CH":
        pops = rho.diagonal()
        rate = model.p * model.J / model.lattice.z
        out[np.diag_indices(g.n)] += rate * dt * (model.lattice.adjacency() @ pops)
    else:
        out[np.diag_indices(g.n)] += model.p * model.J * dt * rho.diagonal()
    m = np.exp(-0.5 * g.sink * dt)
    return m[:, None] * out * m[None, :]


def limiting_population(model: ModelSpec, initial, t0: float = 1e3, tol: float = 1e-12, max_doublings: int = 80):
    """``lim_{t->inf} P(t)`` for noiseless (``p = 0``) dynamics.

    Evaluates ``P(t) = tr(U rho0 U^dagger)`` with ``U = exp(-iKt)`` at
    ``t = t0 * 2^k`` by repeated squaring until two successive values
    differ by less than ``tol``. ``U`` is a contraction, so squaring is
    stable.

    Returns
    -------
    (P_inf, t_reached)
    """
    g = model.generator
    if g.has_jumps:
        raise ValueError("limiting_population needs a noiseless model (p = 0)")
    rho0 = initial_density(initial, g.n)
    U = sla.expm(-1j * g.K * t0)
    t = t0
    prev = float(np.trace(U @ rho0 @ U.conj().T).real)
    for _ in range(max_doublings):
        U = U @ U
        t *= 2
        cur = float(np.trace(U @ rho0 @ U.conj().T).real)
        if abs(cur - prev) < tol:
            return cur, t
        prev = cur
    raise IntegrationError(f"P(t) did not settle by t = {t:.3g}")
