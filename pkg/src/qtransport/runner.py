"""
Execute a validated :class:`~qtransport.config.ExperimentConfig` and
write its outputs. Rates are in units of J and times in units of 1/J.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig
from .drive import DriveSpec, omega_band, propagate_driven
from .dynamics import ModelSpec, limiting_population, propagate
from .lattice import build
from .observables import dwelling_time, momentum_basis, momentum_map, write_momentum_map
from .optimizer import RESOLVENT_MAX_SITES, fit_scaling, reinit_estimate, scan_family, scan_optimal_p
from .spectral import HamiltonianSpec, locked_states, locking_probability, perturb
from .trajectories import sample_ensemble


def _dims(cfg):
    d = cfg.lattice.dims
    return tuple(d) if isinstance(d, list) else d


def make_lattice(cfg: ExperimentConfig):
    return build(cfg.lattice.kind, _dims(cfg), cfg.lattice.exit_spec)


def make_model(cfg: ExperimentConfig, lattice=None) -> ModelSpec:
    m = cfg.model
    lattice = make_lattice(cfg) if lattice is None else lattice
    return ModelSpec(lattice, p=m.p, J=m.J, noise=m.noise, Gamma=m.Gamma)


def _single(cfg):
    lat = make_lattice(cfg)
    if isinstance(lat, list):
        raise ValueError(f"task {cfg.task!r} needs a single exit configuration")
    return make_model(cfg, lat)


def _models(cfg):
    lat = make_lattice(cfg)
    lats = lat if isinstance(lat, list) else [lat]
    return [make_model(cfg, l) for l in lats]


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])


def _initial(cfg):
    return cfg.run.initial


# ---------------------------------------------------------------- tasks


def task_simulate(cfg, out: Path, threads: int) -> dict:
    r = cfg.run
    t_eval = np.linspace(0.0, r.t_max, r.n_out)
    summary = {}
    if r.trajectories:
        model = _single(cfg)
        ens = sample_ensemble(model, _initial(cfg), r.t_max, r.trajectories, seed=r.seed, t_eval=t_eval,
                              batch_size=r.batch_size, workers=threads)
        _write_rows(out / "ensemble.csv", ["t", "P", "P_se"], zip(ens.t, ens.P, ens.P_se))
        summary.update(path="trajectories", n_traj=ens.n_traj, P_final=float(ens.P[-1]),
                       P_final_se=float(ens.P_se[-1]))
        return summary
    models = _models(cfg)
    P = np.zeros_like(t_eval)
    exited = np.zeros_like(t_eval)
    for m in models:
        ts = propagate(m, _initial(cfg), r.t_max, t_eval=t_eval, rtol=r.rtol, atol=r.atol, store_states=False)
        P += ts.P / len(models)
        exited += ts.exited / len(models)
        if len(models) == 1:
            ts.to_csv(out / "timeseries.csv", sites=True)
    if len(models) > 1:
        _write_rows(out / "timeseries.csv", ["t", "P", "exited"], zip(t_eval, P, exited))
    summary.update(path="master-equation", P_final=float(P[-1]), n_exit_configs=len(models))
    return summary


def task_momentum_map(cfg, out: Path, threads: int) -> dict:
    r = cfg.run
    model = _single(cfg)
    ts = propagate(model, _initial(cfg), r.t_max, n_out=r.n_out, rtol=r.rtol, atol=r.atol)
    basis = momentum_basis(model.lattice, model.p, model.J)
    Pk = momentum_map(ts.rho, basis)
    write_momentum_map(out / "momentum_map.csv", ts.t, Pk)
    ts.to_csv(out / "timeseries.csv")
    return {"P_final": float(ts.P[-1]), "sum_Pk_final": float(Pk[:, -1].sum()),
            "momentum_final": [float(v) for v in Pk[:, -1]]}


def task_dwell(cfg, out: Path, threads: int) -> dict:
    models = _models(cfg)
    method = cfg.run.method
    vals = []
    for m in models:
        meth = method if method != "auto" else ("resolvent" if m.n_sites <= RESOLVENT_MAX_SITES else "integrate")
        vals.append(dwelling_time(m, _initial(cfg), method=meth))
    res = {"tbar": float(np.mean(vals)), "p": cfg.model.p, "n_exit_configs": len(models)}
    _write_json(out / "dwell.json", res)
    return res


def _scan_kw(cfg):
    s = cfg.scan
    return dict(p_range=(s.p_min, s.p_max), tol=cfg.run.tol, n_grid=s.n_grid, initial=_initial(cfg),
                method=cfg.run.method)


def _write_scan(path, res):
    pts = dict(zip(res.p_grid.tolist(), res.tbar.tolist()))
    pts[res.p_opt] = res.tbar_opt
    _write_rows(path, ["p", "tbar"], sorted(pts.items()))


def task_scan(cfg, out: Path, threads: int) -> dict:
    s = cfg.scan
    if s.p_values is not None:
        from .optimizer import averaged_dwelling_time

        models = _models(cfg)
        rows = [(p, averaged_dwelling_time(models, p, _initial(cfg), cfg.run.method)) for p in s.p_values]
        _write_rows(out / "pscan.csv", ["p", "tbar"], rows)
        k = int(np.argmin([t for _, t in rows]))
        return {"p_argmin": rows[k][0], "tbar_min": rows[k][1]}
    if s.Ns is not None:
        return _family(cfg, out, threads)
    lat = make_lattice(cfg)
    models = _models(cfg)
    res = scan_optimal_p(models if isinstance(lat, list) else models[0], **_scan_kw(cfg))
    _write_scan(out / "pscan.csv", res)
    summary = {"p_opt": res.p_opt, "tbar_opt": res.tbar_opt, "flagged": res.flagged, "message": res.message}
    _write_json(out / "popt.json", summary)
    return summary


def _family(cfg, out, threads):
    m = cfg.model
    Ns = [tuple(n) if isinstance(n, list) else n for n in cfg.scan.Ns]
    res = scan_family(cfg.lattice.kind, Ns, cfg.lattice.exit_spec, Gamma=m.Gamma, noise=m.noise,
                      workers=threads, **_scan_kw(cfg))
    rows = []
    for N, r in res.items():
        tag = "x".join(map(str, N)) if isinstance(N, tuple) else str(N)
        _write_scan(out / f"pscan_N{tag}.csv", r)
        rows.append((tag, r.p_opt, r.tbar_opt, "1" if r.flagged else "0"))
    _write_rows(out / "popt.csv", ["N", "p_opt", "tbar_opt", "flagged"], rows)
    return {"p_opt": {str(N): r.p_opt for N, r in res.items()},
            "flagged": [str(N) for N, r in res.items() if r.flagged]}


def task_fit(cfg, out: Path, threads: int) -> dict:
    if cfg.fit.data is not None:
        data = {float(k): float(v) for k, v in cfg.fit.data.items()}
        extra = {}
    else:
        extra = _family(cfg, out, threads)
        data = {float(k): v for k, v in extra["p_opt"].items()}
    rep = fit_scaling(data, cfg.fit.confidence)
    d = rep.to_dict()
    d["flagged"] = extra.get("flagged", [])
    _write_json(out / "fit.json", d)
    return {"b": rep.b, "c": rep.c, "ci_b": list(rep.ci_b), "ci_c": list(rep.ci_c)}


def task_locking(cfg, out: Path, threads: int) -> dict:
    lat = make_lattice(cfg)
    if isinstance(lat, list):
        raise ValueError("locking needs explicit exits, not an averaged exit spec")
    lk = cfg.locking
    hs = HamiltonianSpec.regular(lat, cfg.model.J)
    if lk.disorder > 0:
        hs = perturb(hs, lk.disorder, seed=cfg.run.seed)
    rep = locked_states(hs, eigtol=lk.eigtol, amptol=lk.amptol)
    d = rep.to_dict()
    d["locking_probability"] = locking_probability(rep, _initial(cfg))
    if lk.dynamical:
        model = ModelSpec(lat, p=0.0, J=cfg.model.J, Gamma=cfg.model.Gamma, hamiltonian=hs)
        d["P_inf"], d["t_settled"] = limiting_population(model, _initial(cfg))
    _write_json(out / "locking.json", d)
    return {k: d[k] for k in ("locked_dimension", "locking_probability") + (("P_inf",) if lk.dynamical else ())}


def task_reinit(cfg, out: Path, threads: int) -> dict:
    lat = make_lattice(cfg)
    if isinstance(lat, list):
        raise ValueError("reinit needs a single exit configuration")
    res = reinit_estimate(lattice=lat, Gamma=cfg.model.Gamma, J=cfg.model.J, window=cfg.reinit.window,
                          n_grid=cfg.reinit.n_grid)
    _write_rows(out / "decay_rate.csv", ["tau", "gamma"], zip(res.tau, res.gamma))
    d = {"tau_opt": res.tau_opt, "p_est": res.p_est, "gamma_max": res.gamma_max, "degenerate": res.degenerate}
    _write_json(out / "reinit.json", d)
    return d


def task_drive(cfg, out: Path, threads: int) -> dict:
    model = _single(cfg)
    d = cfg.drive
    spec = DriveSpec(omega=d.omega, Omega=d.Omega, gamma=d.gamma, Jprime=d.Jprime, field=d.field)
    r = cfg.run
    res = propagate_driven(model, spec, _initial(cfg), r.t_max, n_out=r.n_out, frame=d.frame,
                           rtol=r.rtol, atol=max(r.atol, 1e-11))
    res.to_csv(out / "driven.csv")
    summary = {"P_final": float(res.P[-1]), "P_upper_final": float(res.P_upper[-1])}
    if model.lattice.kind == "chain":
        Pk = momentum_map(res.rho_lower, momentum_basis(model.lattice, 0.0, model.J))
        write_momentum_map(out / "momentum_map_lower.csv", res.t, Pk)
    if d.omega_band:
        band = omega_band(model, spec, d.omega_band, r.t_max, rtol=r.rtol)
        summary["omega_band"] = {repr(k): v for k, v in band.items()}
    _write_json(out / "drive.json", summary)
    return summary


TASK_FUNCS = {
    "simulate": task_simulate,
    "momentum-map": task_momentum_map,
    "dwell": task_dwell,
    "scan": task_scan,
    "fit": task_fit,
    "locking": task_locking,
    "reinit": task_reinit,
    "drive": task_drive,
}


def versions() -> dict:
    return {
        "qtransport": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def execute(cfg: ExperimentConfig, out, threads: int = 1) -> dict:
    """Run ``cfg`` into directory ``out`` and write ``manifest.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary = TASK_FUNCS[cfg.task](cfg, out, threads)
    wall = time.perf_counter() - t0
    manifest = {
        "task": cfg.task,
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256(),
        "versions": versions(),
        "threads": threads,
        "wall_time_s": wall,
        "outputs": sorted(f for f in os.listdir(out) if f != "manifest.json"),
        "summary": summary,
        "units": "rates in J, times in 1/J",
    }
    _write_json(out / "manifest.json", manifest)
    return manifest
