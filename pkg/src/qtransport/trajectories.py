"""
Quantum-jump unraveling of the transport master equation.

Between jumps a trajectory evolves with the no-jump generator
``K = H - (i/2) diag(loss)`` and its norm decays. A jump happens when the
squared norm falls below a uniform random threshold. The jump channel is
picked in proportion to its instantaneous rate:

* sink: ``Gamma |psi_x|^2`` on each exit, which ends the trajectory;
* CH hop ``j -> i``: ``(pJ/z) |psi_j|^2`` per directed bond;
* PD event at ``i``: ``pJ |psi_i|^2``.

After a noise jump the excitation sits on a single site, so many
trajectories can be advanced together as the columns of one block. The
ensemble mean of the normalised site populations reproduces the diagonal
of the master-equation solution.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .dynamics import ModelSpec

# Taylor step size: ||K|| h <= _THETA
_THETA = 4.0
_TAYLOR_TOL = 1e-15


@dataclass
class TrajectoryRecord:
    """One sampled trajectory.

    ``jumps`` holds ``(time, kind, from_site, to_site)`` tuples with
    ``kind`` in ``{"hop", "dephase", "exit"}`` and 1-based sites
    (``to_site`` is ``None`` for an exit).
    """

    initial_site: int
    exit_time: Optional[float]
    jumps: list = field(default_factory=list)

    @property
    def survived(self) -> bool:
        return self.exit_time is None


@dataclass
class EnsembleResult:
    """Ensemble averages on the output grid.

    ``P`` is the surviving fraction; ``populations`` the mean site
    populations (exited trajectories count as zero). ``*_se`` are
    standard errors of the mean.
    """

    t: np.ndarray
    P: np.ndarray
    P_se: np.ndarray
    populations: np.ndarray
    populations_se: np.ndarray
    exit_times: np.ndarray
    n_traj: int


class _Unraveling:
    def __init__(self, model: ModelSpec):
        g = model.generator
        self.S = g.n
        self.K = g.K if self.S <= 256 else sp.csr_matrix(g.K)
        self.loss = g.loss
        self.sink = g.sink
        lat = model.lattice
        self.pJ = model.p * model.J
        self.noise = model.noise
        self.hop_rate = self.pJ / lat.z
        self.deg = lat.degrees()
        self.nbrs = [np.asarray(lat.neighbors(s)) - 1 for s in lat.sites]
        if self.noise == "CH":
            self.noise_rate = self.hop_rate * self.deg
        else:
            self.noise_rate = np.full(self.S, self.pJ)
        norm = np.abs(g.H).sum(axis=0).max() + 0.5 * g.loss.max()
        self.h_max = _THETA / max(norm, 1e-12)
        self._h_cached = None
        self._A = None

    def _scaled(self, h):
        # the main loop reuses one step size, so keep -i h K around
        if h != self._h_cached:
            self._A = self.K * (-1j * h)
            self._h_cached = h
        return self._A

    def expm(self, psi, h):
        """``exp(-i K h) psi`` by a truncated Taylor series (h <= h_max)."""
        A = self._scaled(h)
        out = psi.copy()
        term = psi
        scale = np.abs(psi).max()
        for j in range(1, 80):
            term = A @ term
            term *= 1.0 / j
            out += term
            if j % 2 == 0 and np.abs(term).max() <= _TAYLOR_TOL * scale:
                break
        return out

    def _jump_time(self, psi0, n0, n1, r, h):
        """Time in (0, h] at which ||exp(-iK t) psi0||^2 = r."""
        lo, hi = 0.0, h
        lr = math.log(r)
        l0, l1 = math.log(n0), math.log(max(n1, 1e-300))
        tau = h * (l0 - lr) / (l0 - l1) if l0 > l1 else h
        psi = None
        for _ in range(60):
            tau = min(max(tau, lo), hi)
            psi = self.expm(psi0, tau)
            a2 = np.abs(psi) ** 2
            nrm = a2.sum()
            f = math.log(nrm) - lr
            if abs(f) < 1e-13 or hi - lo < 1e-14:
                break
            if f > 0:
                lo = tau
            else:
                hi = tau
            rate = float(self.loss @ a2) / nrm
            step = f / rate if rate > 0 else (hi - lo)
            new = tau + step
            tau = new if lo < new < hi else 0.5 * (lo + hi)
        return tau, psi

    def _choose(self, psi, rng):
        a2 = np.abs(psi) ** 2
        rates = np.concatenate([self.sink * a2, self.noise_rate * a2])
        c = np.cumsum(rates)
        k = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
        k = min(k, len(c) - 1)
        if k < self.S:
            return "exit", k, None
        j = k - self.S
        if self.noise == "CH":
            return "hop", j, int(rng.choice(self.nbrs[j]))
        return "dephase", j, j

    def run(self, sites, t_eval, rng, record=False):
        """Advance one batch of trajectories starting on ``sites`` (0-based)."""
        S, B = self.S, len(sites)
        Psi = np.zeros((S, B), dtype=complex)
        Psi[sites, np.arange(B)] = 1.0
        thr = rng.random(B)
        active = np.ones(B, dtype=bool)
        exit_time = np.full(B, np.nan)
        jumps = [[] for _ in range(B)] if record else None
        T = len(t_eval)
        alive = np.zeros(T)
        pop_sum = np.zeros((T, S))
        pop_sq = np.zeros((T, S))

        def snapshot(k):
            idx = np.flatnonzero(active)
            alive[k] = idx.size
            if idx.size:
                a2 = np.abs(Psi[:, idx]) ** 2
                a2 /= a2.sum(axis=0)
                pop_sum[k] = a2.sum(axis=1)
                pop_sq[k] = (a2 ** 2).sum(axis=1)

        t = float(t_eval[0])
        snapshot(0)
        for k in range(1, T):
            t_next = float(t_eval[k])
            n_sub = max(1, math.ceil((t_next - t) / self.h_max - 1e-12))
            h = (t_next - t) / n_sub
            for _ in range(n_sub):
                idx = np.flatnonzero(active)
                if idx.size == 0:
                    break
                old = Psi[:, idx]
                new = self.expm(old, h)
                n_new = (np.abs(new) ** 2).sum(axis=0)
                crossed = n_new <= thr[idx]
                Psi[:, idx] = new
                for c in np.flatnonzero(crossed):
                    b = idx[c]
                    n_old = float((np.abs(old[:, c]) ** 2).sum())
                    self._resolve(b, old[:, c], n_old, float(n_new[c]), t, h, Psi, thr, active,
                                  exit_time, jumps, rng)
                t += h
            t = t_next
            snapshot(k)
        return alive, pop_sum, pop_sq, exit_time, jumps

    def _resolve(self, b, psi, n0, n1, t, h, Psi, thr, active, exit_time, jumps, rng):
        remaining = h
        while True:
            tau, psi_j = self._jump_time(psi, n0, n1, thr[b], remaining)
            t += tau
            remaining -= tau
            kind, src, dst = self._choose(psi_j, rng)
            if jumps is not None:
                jumps[b].append((t, kind, src + 1, None if dst is None else dst + 1))
            if kind == "exit":
                active[b] = False
                exit_time[b] = t
                Psi[:, b] = 0.0
                return
            psi = np.zeros(self.S, dtype=complex)
            psi[dst] = 1.0
            thr[b] = rng.random()
            if remaining <= 0:
                Psi[:, b] = psi
                return
            end = self.expm(psi, remaining)
            n1 = float((np.abs(end) ** 2).sum())
            if n1 > thr[b]:
                Psi[:, b] = end
                return
            n0 = 1.0


def _initial_sites(model, initial, n, rng):
    S = model.n_sites
    if isinstance(initial, str) and initial == "uniform":
        return rng.integers(0, S, n)
    site = int(initial)
    if not 1 <= site <= S:
        raise ValueError(f"initial site {site} outside 1..{S}")
    return np.full(n, site - 1)


def sample_trajectory(model: ModelSpec, initial, t_max: float, seed=None) -> TrajectoryRecord:
    """Sample a single trajectory with its full jump record.

    ``initial`` is a 1-based site or ``"uniform"`` (site drawn at random).
    """
    rng = np.random.default_rng(seed)
    eng = _Unraveling(model)
    site = _initial_sites(model, initial, 1, rng)
    _, _, _, exit_time, jumps = eng.run(site, np.array([0.0, float(t_max)]), rng, record=True)
    et = None if np.isnan(exit_time[0]) else float(exit_time[0])
    return TrajectoryRecord(int(site[0]) + 1, et, jumps[0])


def _batch(args):
    model, initial, n, t_eval, seed = args
    rng = np.random.default_rng(seed)
    eng = _Unraveling(model)
    sites = _initial_sites(model, initial, n, rng)
    alive, s1, s2, et, _ = eng.run(sites, t_eval, rng)
    return alive, s1, s2, et


def sample_ensemble(
    model: ModelSpec,
    initial="uniform",
    t_max: float = 200.0,
    n_traj: int = 10_000,
    seed=None,
    t_eval=None,
    batch_size: int = 1000,
    workers: int = 1,
) -> EnsembleResult:
    """Average ``n_traj`` trajectories on the grid ``t_eval``.

    Batches get independent child seeds of ``seed``, so results depend on
    ``seed`` and ``batch_size`` but not on ``workers``.
    """
    t_eval = np.linspace(0.0, t_max, 201) if t_eval is None else np.asarray(t_eval, dtype=float)
    sizes = [batch_size] * (n_traj // batch_size)
    if n_traj % batch_size:
        sizes.append(n_traj % batch_size)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(model, initial, n, t_eval, s) for n, s in zip(sizes, seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_batch, jobs))
    else:
        parts = [_batch(j) for j in jobs]
    alive = sum(p[0] for p in parts)
    s1 = sum(p[1] for p in parts)
    s2 = sum(p[2] for p in parts)
    exit_times = np.concatenate([p[3] for p in parts])
    n = float(n_traj)
    P = alive / n
    pops = s1 / n
    return EnsembleResult(
        t=t_eval,
        P=P,
        P_se=np.sqrt(P * (1 - P) / n),
        populations=pops,
        populations_se=np.sqrt(np.maximum(s2 / n - pops ** 2, 0.0) / n),
        exit_times=exit_times,
        n_traj=n_traj,
    )
