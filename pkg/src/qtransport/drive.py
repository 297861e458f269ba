"""
Two-tier driven network.

Every site carries a second excited level ``|e'>_i`` at energy ``omega``
above ``|e>_i``. A drive couples the tiers site-locally with the envelope
``sin(2Jt)``, which puts spectral weight at ``omega +- 2J``. Those two
frequencies are resonant with the band edges ``E = -+2J`` of the lower
tier, where the group velocity vanishes, so slow components are lifted
out of the lower band. Relaxation ``|e'>_i -> |e>_i`` at rate ``gamma``
returns them to the lower tier with a randomised momentum.

The state space is the lower tier (indices ``0..S-1``) followed by the
upper tier (``S..2S-1``); the ground state is tracked as the ``exited``
counter, as in :mod:`qtransport.dynamics`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .dynamics import IntegrationError, ModelSpec, initial_density

FIELDS = ("complex", "real")
FRAMES = ("lab", "rotating")


@dataclass(frozen=True)
class DriveSpec:
    """Drive and upper-tier parameters, all in units of ``J``.

    ``field="complex"`` couples ``|e'><e|`` with ``-Omega e^{-i omega t}
    sin(2Jt)`` (plus the Hermitian conjugate), which is the rotating-wave
    form. ``field="real"`` uses the physical field ``-2 Omega cos(omega t)
    sin(2Jt)`` and keeps the counter-rotating terms.
    """

    omega: float = 20.0
    Omega: float = 0.3
    gamma: float = 0.4
    Jprime: float = 0.0
    field: str = "complex"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.Omega < 0:
            raise ValueError(f"Omega must be non-negative, got {self.Omega}")
        if self.field not in FIELDS:
            raise ValueError(f"field must be one of {FIELDS}, got {self.field!r}")


@dataclass
class DrivenSeries:
    """Output of :func:`propagate_driven`.

    ``populations`` has shape ``(T, 2S)``: lower tier first. ``rho_lower``
    holds the lower-tier block of the density matrix when states are
    stored.
    """

    t: np.ndarray
    P_lower: np.ndarray
    P_upper: np.ndarray
    exited: np.ndarray
    populations: np.ndarray
    rho_lower: Optional[np.ndarray] = None

    @property
    def P(self) -> np.ndarray:
        """Total surviving population (both tiers)."""
        return self.P_lower + self.P_upper

    def to_csv(self, path) -> None:
        """Long-format ``t,tier,P,exited``; times in 1/J."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "tier", "P", "exited"])
            for k, t in enumerate(self.t):
                for tier, P in (("lower", self.P_lower[k]), ("upper", self.P_upper[k])):
                    w.writerow([repr(float(t)), tier, repr(float(P)), repr(float(self.exited[k]))])


def _driven_rhs(model: ModelSpec, drive: DriveSpec, frame: str):
    lat = model.lattice
    S = lat.n_sites
    n = 2 * S
    g = model.generator
    K0 = np.zeros((n, n), dtype=complex)
    K0[:S, :S] = g.K
    K0[S:, S:] = -drive.Jprime * lat.adjacency() - 0.5j * drive.gamma * np.eye(S)
    w = drive.omega
    if frame == "lab":
        K0[S:, S:] += w * np.eye(S)
    sink = np.concatenate([g.sink, np.zeros(S)])
    gam = drive.gamma
    Om = drive.Omega
    two_J = 2.0 * model.J
    lower = slice(0, S)
    upper = slice(S, n)
    diag = np.diag_indices(n)

    def coupling(t):
        # amplitude multiplying |e'><e| (upper <- lower)
        s = np.sin(two_J * t)
        if drive.field == "complex":
            f = -Om * np.exp(-1j * w * t) * s
        else:
            f = -2.0 * Om * np.cos(w * t) * s
        if frame == "rotating":
            f = f * np.exp(1j * w * t)
        return f

    def rhs(t, y):
        rho = y[: n * n].reshape(n, n)
        f = coupling(t)
        kr = K0 @ rho
        kr[upper] += f * rho[lower]
        kr[lower] += np.conj(f) * rho[upper]
        d = -1j * (kr - kr.conj().T)
        pops = rho.diagonal().real
        d[diag[0][:S], diag[1][:S]] += gam * pops[S:]
        dy = np.empty_like(y)
        dy[: n * n] = d.ravel()
        dy[n * n] = sink @ pops
        return dy

    return rhs


def propagate_driven(
    model: ModelSpec,
    drive: DriveSpec,
    initial="uniform",
    t_max: float = 200.0,
    t_eval=None,
    n_out: int = 201,
    frame: str = "lab",
    rtol: float = 1e-8,
    atol: float = 1e-11,
    store_states: bool = True,
) -> DrivenSeries:
    """Integrate the driven two-tier master equation.

    Parameters
    ----------
    model : ModelSpec
        Lower-tier network. Must be noiseless (``p = 0``).
    drive : DriveSpec
    initial
        A lower-tier initial state (anything :func:`initial_density`
        accepts for ``S`` sites) or a full ``2S x 2S`` density matrix.
    frame : {"lab", "rotating"}
        ``rotating`` removes the ``omega`` level offset by an exact
        transformation. Populations are frame independent; with
        ``field="complex"`` the rotating frame has no fast oscillation
        and is much cheaper.

    Raises
    ------
    IntegrationError
        When the integrator gives up.
    """
    if model.p != 0:
        raise ValueError("the driven model is defined without classical noise (p = 0)")
    if frame not in FRAMES:
        raise ValueError(f"frame must be one of {FRAMES}, got {frame!r}")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    S = model.n_sites
    n = 2 * S
    if isinstance(initial, np.ndarray) and initial.shape == (n, n):
        rho0 = np.asarray(initial, dtype=complex)
    else:
        rho0 = np.zeros((n, n), dtype=complex)
        rho0[:S, :S] = initial_density(initial, S)
    t_eval = np.linspace(0.0, t_max, n_out) if t_eval is None else np.asarray(t_eval, dtype=float)
    # the fastest coefficient oscillates at omega + 2J; cap the step below its period
    max_step = np.inf
    if frame == "lab" or drive.field == "real":
        max_step = 0.5 / (drive.omega + 2.0 * model.J)
    y0 = np.concatenate([rho0.ravel(), [1.0 - np.trace(rho0).real]]).astype(complex)
    sol = solve_ivp(
        _driven_rhs(model, drive, frame),
        (0.0, float(t_max)),
        y0,
        method="DOP853",
        t_eval=t_eval,
        rtol=rtol,
        atol=atol,
        max_step=max_step,
    )
    if sol.status != 0:
        raise IntegrationError(sol.message)
    Y = sol.y.T
    rho = Y[:, : n * n].reshape(-1, n, n)
    pops = np.real(np.einsum("kii->ki", rho))
    return DrivenSeries(
        t=sol.t,
        P_lower=pops[:, :S].sum(axis=1),
        P_upper=pops[:, S:].sum(axis=1),
        exited=Y[:, n * n].real,
        populations=pops,
        rho_lower=rho[:, :S, :S].copy() if store_states else None,
    )


def omega_band(model: ModelSpec, drive: DriveSpec, omegas=(10.0, 20.0, 40.0), t_max: float = 200.0,
               field: str = "real", **kw) -> dict:
    """Surviving population at ``t_max`` for each drive frequency.

    With the complex (rotating-wave) field the result does not depend on
    ``omega`` at all, so the band is computed with the physical real
    field by default.
    """
    from dataclasses import replace

    out = {}
    for w in omegas:
        d = replace(drive, omega=float(w), field=field)
        res = propagate_driven(model, d, t_max=t_max, t_eval=[0.0, t_max], store_states=False, **kw)
        out[float(w)] = float(res.P[-1])
    return out
