"""
Optimal noise level, the ``p/(1-p) = b/(N+c)`` scaling fit, and the
periodic-reinitialisation estimate of the optimal rate.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
from scipy import stats
from scipy.optimize import curve_fit, minimize_scalar

from .dynamics import ModelSpec, initial_density
from .lattice import build
from .observables import DivergenceError, dwelling_time

RESOLVENT_MAX_SITES = 1000


@dataclass
class ScanResult:
    """Dwelling time over a grid of ``p`` and the refined optimum.

    ``flagged`` is set when the coarse grid is not unimodal around its
    minimum; ``p_opt`` is then the grid argmin.
    """

    p_grid: np.ndarray
    tbar: np.ndarray
    p_opt: float
    tbar_opt: float
    flagged: bool = False
    message: str = ""

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("p,tbar\n")
            for p, t in zip(self.p_grid, self.tbar):
                fh.write(f"{p!r},{t!r}\n")


def _as_models(model):
    if isinstance(model, ModelSpec):
        return [model]
    models = list(model)
    if not models:
        raise ValueError("no models to scan")
    return models


def averaged_dwelling_time(models, p, initial="uniform", method="auto") -> float:
    """``t-bar`` at noise level ``p``, averaged over a family of models
    (e.g. every exit position). ``t-bar`` is linear in ``P(t)``, so this
    equals the dwelling time of the exit-averaged ``P(t)``."""
    total = 0.0
    for m in models:
        meth = method
        if meth == "auto":
            meth = "resolvent" if m.n_sites <= RESOLVENT_MAX_SITES else "integrate"
        try:
            total += dwelling_time(m.with_p(p), initial, method=meth)
        except DivergenceError:
            return math.inf
    return total / len(models)


def scan_optimal_p(
    model,
    p_range=(1e-3, 0.5),
    tol: float = 1e-5,
    n_grid: int = 25,
    initial="uniform",
    method: str = "auto",
) -> ScanResult:
    """Minimise the average dwelling time over the noise level.

    A coarse log-spaced grid of ``n_grid`` points brackets the minimum,
    which is then refined to ``|dp| <= tol`` by bounded Brent search
    (golden section with parabolic steps).

    Parameters
    ----------
    model : ModelSpec or sequence of ModelSpec
        The ``p`` of the template is ignored. A sequence is averaged
        (exit-averaged variants).
    p_range : (float, float)
        Search interval inside [0, 1). A zero-width range returns a
        degenerate scan at that point.
    """
    models = _as_models(model)
    lo, hi = (float(v) for v in p_range)
    if not 0.0 <= lo <= hi < 1.0:
        raise ValueError(f"p_range must satisfy 0 <= lo <= hi < 1, got {p_range}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    def f(p):
        return averaged_dwelling_time(models, p, initial, method)

    if hi == lo:
        t = f(lo)
        return ScanResult(np.array([lo]), np.array([t]), lo, t, message="degenerate range")

    if lo > 0:
        grid = np.geomspace(lo, hi, n_grid)
    else:
        grid = np.concatenate([[0.0], np.geomspace(min(1e-3, hi / 10), hi, n_grid - 1)])
    vals = np.array([f(p) for p in grid])
    i = int(np.argmin(vals))
    finite = np.isfinite(vals)
    d = np.diff(vals[finite])
    sign_changes = int(np.sum(np.diff(np.sign(d[d != 0])) != 0)) if d.size > 1 else 0
    flagged = sign_changes > 1
    if flagged:
        return ScanResult(grid, vals, float(grid[i]), float(vals[i]), True,
                          "coarse grid not unimodal; using grid argmin")
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": tol})
    p_opt, t_opt = float(res.x), float(res.fun)
    if vals[i] < t_opt:
        p_opt, t_opt = float(grid[i]), float(vals[i])
    msg = ""
    if i in (0, len(grid) - 1):
        msg = "optimum at the edge of p_range"
    return ScanResult(grid, vals, p_opt, t_opt, False, msg)


def _scan_job(args):
    kind, N, exit_spec, Gamma, noise, kw = args
    dims = (N, N + 1) if kind == "rectangle" and np.isscalar(N) else N
    lat = build(kind, dims, exit_spec)
    if isinstance(lat, list):
        models = [ModelSpec(l, Gamma=Gamma, noise=noise) for l in lat]
    else:
        models = ModelSpec(lat, Gamma=Gamma, noise=noise)
    return N, scan_optimal_p(models, **kw)


def scan_family(kind: str, Ns: Sequence, exit_spec="end", Gamma: float = 3.0, noise: str = "CH",
                workers: int = 1, **kw) -> dict:
    """:func:`scan_optimal_p` for a lattice family at each size in ``Ns``.

    Returns ``{N: ScanResult}``. For 2D kinds ``N`` may be an int or a
    ``(rows, cols)`` tuple; an int means ``N x N``, except for the
    rectangle family where it means ``N x (N+1)``.
    """
    jobs = [(kind, N, exit_spec, Gamma, noise, kw) for N in Ns]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_scan_job, jobs))
    else:
        out = [_scan_job(j) for j in jobs]
    return dict(out)


# ---------------------------------------------------------------- scaling law


@dataclass
class FitReport:
    """Least-squares fit of ``p/(1-p) = b/(N+c)``.

    Intervals are two-sided at ``confidence`` from the linearised
    covariance with Student-t quantiles. ``b_linear``/``c_linear`` come
    from the exact linear form ``(1-p)/p = N/b + c/b``.
    """

    b: float
    c: float
    ci_b: tuple
    ci_c: tuple
    N: np.ndarray
    y: np.ndarray
    residuals: np.ndarray
    b_linear: float = math.nan
    c_linear: float = math.nan
    confidence: float = 0.95

    def ratio(self, N) -> np.ndarray:
        return self.b / (np.asarray(N, dtype=float) + self.c)

    def p_opt(self, N) -> np.ndarray:
        r = self.ratio(N)
        return r / (1.0 + r)

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "c": self.c,
            "ci_b": list(self.ci_b),
            "ci_c": list(self.ci_c),
            "confidence": self.confidence,
            "b_linear": self.b_linear,
            "c_linear": self.c_linear,
            "N": [float(n) for n in self.N],
            "y": [float(v) for v in self.y],
            "residuals": [float(r) for r in self.residuals],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def fit_scaling(data: Mapping, confidence: float = 0.95) -> FitReport:
    """Fit ``p/(1-p) = b/(N+c)`` to ``{N: p_opt}``."""
    N = np.array(sorted(data), dtype=float)
    if len(np.unique(N)) < 3:
        raise ValueError("need at least three distinct N to fit b and c")
    p = np.array([data[k] for k in sorted(data)], dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("p_opt values must lie in (0, 1)")
    y = p / (1.0 - p)
    slope, icept = np.polyfit(N, 1.0 / y, 1)
    b_lin = 1.0 / slope
    c_lin = icept * b_lin

    def model(n, b, c):
        return b / (n + c)

    popt, pcov = curve_fit(model, N, y, p0=[b_lin, c_lin], xtol=1e-14, ftol=1e-14, maxfev=20000)
    b, c = (float(v) for v in popt)
    resid = y - model(N, b, c)
    dof = len(N) - 2
    if dof > 0 and np.all(np.isfinite(pcov)):
        half = stats.t.ppf(0.5 + confidence / 2, dof) * np.sqrt(np.diag(pcov))
    else:
        half = np.array([math.nan, math.nan])
    return FitReport(b, c, (b - half[0], b + half[0]), (c - half[1], c + half[1]), N, y, resid,
                     b_lin, c_lin, confidence)


# ---------------------------------------------------------------- reinitialisation


@dataclass
class ReinitResult:
    """Decay-rate maximum of the periodic-reinitialisation picture.

    ``p_est`` satisfies ``p/(1-p) = 1/(J tau_opt)``. ``degenerate`` is set
    when the rate is flat over the window (no preferred period).
    """

    tau_opt: float
    p_est: float
    gamma_max: float
    degenerate: bool = False
    tau: np.ndarray = field(default=None, repr=False)
    gamma: np.ndarray = field(default=None, repr=False)


def decay_rate_peak(P: Callable, window: float, n_grid: int = 400, J: float = 1.0,
                    flat_tol: float = 1e-9) -> ReinitResult:
    """Locate the interior maximum of ``gamma(tau) = -ln P(tau) / tau``.

    Only interior local maxima count: the value at the left edge of the
    window is dominated by the immediate drain of population that starts
    on an exit site and says nothing about the reinitialisation period.

    Raises
    ------
    ValueError
        If ``gamma`` has no interior maximum in ``(0, window]``.
    """
    tau = np.linspace(window / n_grid, window, n_grid)
    gam = np.array([-math.log(P(t)) / t for t in tau])
    if np.ptp(gam) <= flat_tol * max(np.abs(gam).max(), 1e-300):
        return ReinitResult(math.nan, math.nan, float(gam.mean()), True, tau, gam)
    interior = np.flatnonzero((gam[1:-1] > gam[:-2]) & (gam[1:-1] >= gam[2:])) + 1
    if interior.size == 0:
        raise ValueError(f"decay rate has no interior maximum in (0, {window}]")
    k = interior[np.argmax(gam[interior])]
    res = minimize_scalar(lambda t: math.log(P(t)) / t, bounds=(tau[k - 1], tau[k + 1]),
                          method="bounded", options={"xatol": 1e-6 * window})
    t_opt = float(res.x)
    ratio = 1.0 / (J * t_opt)
    return ReinitResult(t_opt, ratio / (1.0 + ratio), float(-res.fun), False, tau, gam)


def coherent_population(model: ModelSpec, initial="uniform") -> Callable:
    """``P(t)`` of the noiseless (``p = 0``) dynamics as a callable."""
    g = model.with_p(0.0).generator
    rho0 = initial_density(initial, g.n)
    K = g.K

    def P(t):
        U = sla.expm(-1j * K * t)
        return float(np.real(np.einsum("ij,jk,ik->", U, rho0, U.conj())))

    return P


def reinit_estimate(N: int = 40, Gamma: float = 3.0, J: float = 1.0, lattice=None,
                    window: float = None, n_grid: int = 400) -> ReinitResult:
    """Optimal reinitialisation period and the noise level it implies.

    ``P(t)`` is the coherent (``p = 0``) remaining population from the
    uniform mixture; the period that maximises ``-ln P(tau)/tau`` maps to
    ``p/(1-p) = 1/(J tau)``. The search window defaults to ``5 N / J``
    and is doubled once if no interior maximum is found.
    """
    if lattice is None:
        if N < 2:
            raise ValueError("N must be at least 2")
        lattice = build("chain", N, "end")
    if Gamma <= 0:
        raise ValueError("Gamma must be positive")
    model = ModelSpec(lattice, p=0.0, J=J, Gamma=Gamma)
    P = coherent_population(model)
    window = window or 5.0 * lattice.n_sites / J
    try:
        return decay_rate_peak(P, window, n_grid, J)
    except ValueError:
        return decay_rate_peak(P, 2 * window, 2 * n_grid, J)
