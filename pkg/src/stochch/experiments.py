"""Experiment recipes, Monte-Carlo aggregation, checkpointing and run manifests.

A run directory holds ``config.toml`` (the canonical config), ``manifest.json``
and one sub-directory per (parameter value, realization). Every realization
writes its CSV files at the end from rows kept in memory; the checkpoint
stores those rows together with the solver state, so a resumed run writes
exactly the bytes an uninterrupted run would.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import ch, ms
from .analysis import (extract_level_set, fit_circle, radial_deviation, rightmost_point,
                       compensated_level, spectral_constant, SpectralError, _ray_crossing)
from .config import ExperimentConfig, dumps
from .mesh import FeFunction, Mesh, build_uniform_mesh
from .noise import NoisePath, NoiseSpec, SMOOTH, generate_path, refine_time_grid
from .vtk import write_vtk


class RealizationFailed(RuntimeError):
    pass


class RunInterrupted(RuntimeError):
    """Raised by the ``halt_at`` hook after the checkpoint of that step is written."""


# ---------------------------------------------------------------------------
# formatting


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


def read_csv(path) -> tuple[list, list]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seeds: list
    outputs: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_clock: float = 0.0

    def write(self, run_dir: Path) -> None:
        self.outputs = sorted(set(self.outputs))
        with open(run_dir / "manifest.json", "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, run_dir) -> "RunManifest":
        with open(Path(run_dir) / "manifest.json") as fh:
            return cls(**json.load(fh))


@dataclass
class RunResult:
    run_dir: Path
    summary: list           # list of dicts
    failures: list
    manifest: RunManifest

    @property
    def ok(self) -> bool:
        return not self.failures


def _start(cfg: ExperimentConfig, name: str | None = None) -> tuple[Path, RunManifest, float]:
    run_dir = cfg.run_dir(name)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.toml").write_text(dumps(cfg))
    man = RunManifest(cfg.config_hash(), __version__, cfg.seed_list(), ["config.toml"])
    return run_dir, man, time.perf_counter()


def _finish(run_dir, man, t0, summary, failures, summary_header=None) -> RunResult:
    if summary:
        header = summary_header or list(summary[0])
        write_csv(run_dir / "summary.csv", header, [[r.get(h, "") for h in header]
                                                    for r in summary])
        man.outputs.append("summary.csv")
    for p in run_dir.rglob("*"):
        if p.is_file() and p.suffix in (".csv", ".vtk", ".json") and p.name != "manifest.json":
            man.outputs.append(str(p.relative_to(run_dir)))
    man.failures = failures
    man.wall_clock = time.perf_counter() - t0
    man.write(run_dir)
    return RunResult(run_dir, summary, failures, man)


# ---------------------------------------------------------------------------
# checkpoints


def _save_checkpoint(path: Path, state: ch.ChState, rows: dict) -> None:
    m = state.mesh
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, nodes=m.nodes, triangles=m.triangles, keys=m.keys, parents=m.parents,
             codes=m.codes, base_n=m.base_n, X=state.X.values, w=state.w.values,
             t=state.t, j=state.j, diagnostics=json.dumps(state.diagnostics),
             rows=json.dumps(rows))
    os.replace(tmp, path)


def _load_checkpoint(path: Path) -> tuple[ch.ChState, dict]:
    with np.load(path) as d:
        mesh = Mesh(d["nodes"], d["triangles"], d["keys"], d["parents"], d["codes"],
                    int(d["base_n"]))
        st = ch.ChState(mesh, FeFunction(mesh, d["X"]), FeFunction(mesh, d["w"]),
                        float(d["t"]), int(d["j"]), json.loads(str(d["diagnostics"])))
        rows = json.loads(str(d["rows"]))
    return st, rows


# ---------------------------------------------------------------------------
# CH realization driver


DIAG_HEADER = ["step", "t", "energy", "mass", "newton_iters", "linear_iters", "dofs"]
METRIC_HEADER = ["run_id", "t", "metric", "value"]


def _noise_increment(noise, mesh: Mesh, k: float, j: int):
    if noise is None:
        return None
    if isinstance(noise, NoisePath):
        return noise.increment(j, mesh)
    from .noise import sample_increment
    return sample_increment(noise, mesh, k, j)


def step_with_retry(state: ch.ChState, params: ch.ChParams, dW) -> ch.ChState:
    """One step; on Newton failure retry once as two half steps sharing dW equally."""
    try:
        return ch.step(state, params, dW)
    except ch.NewtonError:
        half = replace(params, k=params.k / 2)
        dh = None if dW is None else FeFunction(dW.mesh, dW.values / 2)
        mid = ch.step(state, half, dh)
        if dh is not None and mid.mesh.mesh_id != dh.mesh.mesh_id:
            from .mesh import transfer
            dh = transfer(dh, dh.mesh, mid.mesh)
        out = ch.step(mid, half, dh)
        d = dict(out.diagnostics, newton_iters=out.diagnostics["newton_iters"]
                 + mid.diagnostics["newton_iters"], retried=1)
        return replace(out, j=state.j + 1, t=state.t + params.k, diagnostics=d)


def run_ch_realization(state0: ch.ChState, params: ch.ChParams, noise, n_steps: int,
                       out_dir: Path, run_id: str, observe: Callable,
                       output_every: int = 1, snapshot_every: int = 0,
                       checkpoint_every: int = 0, halt_at: int | None = None) -> dict:
    """Advance ``n_steps`` and write diagnostics.csv, metrics.csv and VTK snapshots.

    ``observe(state)`` returns a dict of scalar metrics recorded at the output
    cadence. Returns the per-realization summary (also stored as summary.json);
    a completed realization is not recomputed.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    done = out_dir / "summary.json"
    if done.exists():
        return json.loads(done.read_text())
    ckpt = out_dir / "checkpoint.npz"
    if ckpt.exists():
        state, rows = _load_checkpoint(ckpt)
    else:
        state = replace(state0, t=0.0, j=0)
        rows = {"diag": [], "metrics": [], "snapshots": []}
        _record(state, rows, run_id, observe, out_dir, snapshot=snapshot_every > 0)
    while state.j < n_steps:
        dW = _noise_increment(noise, state.mesh, params.k, state.j)
        state = step_with_retry(state, params, dW)
        j = state.j
        _record(state, rows, run_id, observe if (j % output_every == 0 or j == n_steps) else None,
                out_dir, snapshot=snapshot_every > 0 and (j % snapshot_every == 0 or j == n_steps))
        if checkpoint_every and j % checkpoint_every == 0 and j < n_steps:
            _save_checkpoint(ckpt, state, rows)
        if halt_at is not None and j == halt_at:
            raise RunInterrupted(f"halted after step {j}")
    write_csv(out_dir / "diagnostics.csv", DIAG_HEADER, rows["diag"])
    write_csv(out_dir / "metrics.csv", METRIC_HEADER, rows["metrics"])
    summary = {"run_id": run_id, "steps": state.j, "t": fmt(state.t)}
    series = defaultdict_list(rows["metrics"])
    for name, vals in series.items():
        v = np.array([float(x) for x in vals])
        summary[f"{name}_final"] = fmt(v[-1])
        summary[f"{name}_max"] = fmt(np.nanmax(np.abs(v)) if np.any(np.isfinite(v)) else np.nan)
    done.write_text(json.dumps(summary, sort_keys=True) + "\n")
    if ckpt.exists():
        ckpt.unlink()
    return summary


def defaultdict_list(metric_rows) -> dict:
    out: dict = {}
    for _, _, name, val in metric_rows:
        out.setdefault(name, []).append(val)
    return out


def _record(state, rows, run_id, observe, out_dir, snapshot=False):
    d = state.diagnostics
    rows["diag"].append([fmt(state.j), fmt(state.t), fmt(d.get("energy", np.nan)),
                         fmt(d.get("mass", np.nan)), fmt(d.get("newton_iters", 0)),
                         fmt(d.get("linear_iters", 0)), fmt(d.get("dofs", state.mesh.num_nodes))])
    if observe is not None:
        for name, val in observe(state).items():
            rows["metrics"].append([run_id, fmt(state.t), name, fmt(val)])
    if snapshot:
        snap = out_dir / "snapshots"
        snap.mkdir(exist_ok=True)
        name = f"step{state.j:07d}.vtk"
        write_vtk(snap / name, state.mesh, {"X": state.X, "w": state.w},
                  title=f"{run_id} t={fmt(state.t)}")
        rows["snapshots"].append(name)


# ---------------------------------------------------------------------------
# initial data


def interface_for(name: str):
    return ch.TwoCircles() if name == "two_circles" else ch.Circle()


_relax_cache: dict = {}


def relaxed_state(cfg: ExperimentConfig, i: int, interface) -> ch.ChState:
    """Initial tanh profile on its adapted mesh, relaxed deterministically (cached)."""
    params = cfg.ch_params(i)
    # noise and run-length settings do not enter the deterministic relaxation
    key = (repr(interface), replace(params, g=0.0, gamma=1.0, k=cfg.relax_k, T=1.0),
           cfg.relax_T, cfg.base_n)
    if key in _relax_cache:
        return _relax_cache[key]
    eps = params.eps
    fn = ch.tanh_profile(interface, eps)
    mesh = build_uniform_mesh(cfg.base_n)
    if params.adapt and params.h_min < params.h_max:
        mesh = ch.adapt_to_profile(fn, mesh, eps, params.h_min, params.h_max)
    state = ch.ChState.initial(ch.interpolate(fn, mesh), eps)
    if cfg.relax_T > 0:
        state = ch.relax_state(state, replace(params, k=cfg.relax_k), cfg.relax_T)
    else:
        state = replace(state, diagnostics=dict(state.diagnostics))
    if len(_relax_cache) > 16:
        _relax_cache.clear()
    _relax_cache[key] = state
    return state


def _n_steps(T: float, k: float) -> int:
    n = int(round(T / k))
    if n < 1 or abs(n * k - T) > 1e-9 * T:
        raise ValueError(f"time step {k} does not divide T={T}")
    return n


def _ch_noise(cfg, params, seed):
    if params.g == 0:
        return None
    return cfg.noise_spec(seed)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MonteCarloResult:
    rows: list                 # per realization dicts (index, seed, metrics...)
    failures: list
    stats: dict                # metric -> {"mean", "std", "median", "n"}


def monte_carlo(runner: Callable, seeds, metrics=None) -> MonteCarloResult:
    """Run ``runner(seed, index) -> dict`` for every seed and aggregate numeric metrics.

    A raising realization is recorded and skipped; if all fail the error is raised.
    """
    rows, failures = [], []
    for i, seed in enumerate(seeds):
        try:
            out = runner(int(seed), i)
        except (RunInterrupted, KeyboardInterrupt):
            raise
        except Exception as exc:  # noqa: BLE001 - realization isolation
            failures.append({"index": i, "seed": int(seed), "error": f"{type(exc).__name__}: {exc}"})
            continue
        rows.append({"index": i, "seed": int(seed), **out})
    if not rows:
        raise RealizationFailed(f"all {len(failures)} realizations failed: {failures[0]['error']}")
    stats = {}
    names = metrics or [k for k, v in rows[0].items() if k not in ("index", "seed")
                        and _is_number(v)]
    for name in names:
        v = np.array([float(r[name]) for r in rows])
        stats[name] = {"mean": float(v.mean()),
                       "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
                       "median": float(np.median(v)), "n": len(v)}
    return MonteCarloResult(rows, failures, stats)


def _is_number(v) -> bool:
    try:
        float(v)
        return True
    except (TypeError, ValueError):
        return False


# ---------------------------------------------------------------------------
# recipes


def _level(cfg, state, interface) -> float:
    if cfg.level == "zero":
        return 0.0
    return compensated_level(state.X, _probe(cfg, interface))


def _probe(cfg, interface):
    if cfg.probe:
        return tuple(cfg.probe)
    if isinstance(interface, ch.TwoCircles):
        return (interface.c2[0] + interface.r2, interface.c2[1])
    return (interface.center[0] + interface.radius, interface.center[1])


def circle_observer(level: float, center=(0.5, 0.5), R=0.2):
    def observe(state):
        ls = extract_level_set(state.X, level)
        if len(ls) == 0:
            return {"max_dev": np.nan, "mean_dev": np.nan, "x_dev": np.nan, "radius": np.nan}
        rd = radial_deviation(ls, center, R)
        return {"max_dev": rd.max, "mean_dev": rd.mean, "x_dev": rd.x_axis,
                "radius": fit_circle(ls.points)[1]}
    return observe


def rightmost_observer(level: float):
    def observe(state):
        ls = extract_level_set(state.X, level)
        x = rightmost_point(ls) - 0.5 if len(ls) else np.nan
        return {"rightmost": x, "components": sum(ls.closed), "mass": ch.mass(state.X),
                "energy": state.diagnostics.get("energy", np.nan)}
    return observe


def _eps_tag(i: int) -> str:
    return f"eps{i}"


def run_one_circle(cfg: ExperimentConfig, halt_at=None) -> RunResult:
    """Relax a circle per eps and run noisy realizations; radial deviation series."""
    run_dir, man, t0 = _start(cfg)
    interface = ch.Circle()
    summary, failures = [], []
    for i, eps in enumerate(cfg.eps_list):
        params = cfg.ch_params(i)
        state0 = relaxed_state(cfg, i, interface)
        level = _level(cfg, state0, interface)
        n = _n_steps(cfg.T, params.k)

        def runner(seed, r, params=params, state0=state0, level=level, i=i):
            return run_ch_realization(
                state0, params, _ch_noise(cfg, params, seed), n,
                run_dir / _eps_tag(i) / f"r{r:03d}", f"{_eps_tag(i)}_r{r:03d}",
                circle_observer(level), cfg.output_every, cfg.snapshot_every,
                cfg.checkpoint_every, halt_at)

        res = monte_carlo(runner, cfg.seed_list(), metrics=["max_dev_max"])
        failures += [dict(f, eps=eps) for f in res.failures]
        for row in res.rows:
            summary.append({"eps": fmt(eps), "k": fmt(params.k), "level": fmt(level),
                            "index": row["index"], "seed": row["seed"],
                            "max_dev": row["max_dev_max"], "x_dev_final": row["x_dev_final"]})
        st = res.stats["max_dev_max"]
        summary.append({"eps": fmt(eps), "k": fmt(params.k), "level": fmt(level),
                        "index": "median", "seed": "", "max_dev": fmt(st["median"]),
                        "x_dev_final": ""})
    return _finish(run_dir, man, t0, summary, failures)


def run_two_circles(cfg: ExperimentConfig, halt_at=None, gamma=None, tag="") -> RunResult:
    """Two-circle phase-field runs tracking the shifted rightmost interface point."""
    run_dir, man, t0 = _start(cfg)
    summary, failures = _two_circle_runs(cfg, run_dir, halt_at)
    return _finish(run_dir, man, t0, summary, failures)


def _two_circle_runs(cfg, run_dir, halt_at, over=None, tag="", seeds=None):
    interface = ch.TwoCircles()
    summary, failures = [], []
    for i, eps in enumerate(cfg.eps_list):
        params = cfg.ch_params(i, **(over or {}))
        state0 = relaxed_state(cfg, i, interface)
        level = _level(cfg, state0, interface)
        n = _n_steps(cfg.T, params.k)

        def runner(seed, r, params=params, state0=state0, level=level, i=i):
            out = run_dir / f"{tag}{_eps_tag(i)}" / f"r{r:03d}"
            s = run_ch_realization(state0, params, _ch_noise(cfg, params, seed), n, out,
                                   f"{tag}{_eps_tag(i)}_r{r:03d}", rightmost_observer(level),
                                   cfg.output_every, cfg.snapshot_every, cfg.checkpoint_every,
                                   halt_at)
            _, mrows = read_csv(out / "metrics.csv")
            xs = [(float(t), float(v)) for _, t, name, v in mrows if name == "rightmost"]
            write_csv(out / "rightmost.csv", ["t", "rightmost_shifted"], xs)
            return s

        res = monte_carlo(runner, seeds or cfg.seed_list(), metrics=["rightmost_final"])
        failures += [dict(f, eps=eps, tag=tag) for f in res.failures]
        for row in res.rows:
            summary.append({"tag": tag, "eps": fmt(eps), "gamma": fmt(params.gamma),
                            "g": fmt(params.g), "index": row["index"], "seed": row["seed"],
                            "rightmost_final": row["rightmost_final"],
                            "mass_final": row["mass_final"]})
    return summary, failures


def run_gamma_sweep(cfg: ExperimentConfig, halt_at=None) -> RunResult:
    """Two circles: deterministic reference plus stochastic runs for each gamma.

    Emits the sup-distance between each stochastic rightmost series and the
    deterministic one.
    """
    run_dir, man, t0 = _start(cfg)
    det, failures = _two_circle_runs(cfg, run_dir, halt_at, over={"g": 0.0}, tag="det_",
                                     seeds=cfg.seed_list()[:1])
    summary = list(det)
    for gamma in cfg.gammas or (cfg.ch.get("gamma", 1.0),):
        tag = f"gamma{gamma:g}_"
        rows, fails = _two_circle_runs(cfg, run_dir, halt_at, over={"gamma": gamma}, tag=tag)
        failures += fails
        for row in rows:
            i = cfg.eps_list.index(float(row["eps"]))
            ref = _series(run_dir / f"det_{_eps_tag(i)}" / "r000" / "rightmost.csv")
            cur = _series(run_dir / f"{tag}{_eps_tag(i)}" / f"r{int(row['index']):03d}"
                          / "rightmost.csv")
            row["sup_distance"] = fmt(np.nanmax(np.abs(cur - ref)))
        summary += rows
    return _finish(run_dir, man, t0, summary, failures,
                   ["tag", "eps", "gamma", "g", "index", "seed", "rightmost_final",
                    "mass_final", "sup_distance"])


def _series(path) -> np.ndarray:
    _, rows = read_csv(path)
    return np.array([float(r[1]) for r in rows])


# ---------------------------------------------------------------------------
# Mullins-Sekerka runs


def initial_curves(name: str, n_curve: int) -> list:
    if name == "two_circles":
        tc = ch.TwoCircles()
        return [ms.regular_polygon(tc.c1, tc.r1, n_curve), ms.regular_polygon(tc.c2, tc.r2, n_curve)]
    c = ch.Circle()
    return [ms.regular_polygon(c.center, c.radius, n_curve)]


def run_ms_realization(curves, params: ms.MsParams, noise, n_steps: int, out_dir: Path,
                       run_id: str, output_every: int = 1, snapshot_every: int = 0,
                       center=(0.5, 0.5)) -> dict:
    """Front-tracking run writing curve.csv, rightmost.csv, metrics.csv and v snapshots."""
    out_dir.mkdir(parents=True, exist_ok=True)
    run = ms.MsRun(list(curves), ms.bulk_mesh_for(curves, params))
    curve_rows, right_rows, metric_rows = [], [], []
    status = "complete"

    def record():
        for ci, c in enumerate(run.curves):
            for ni, (x, y) in enumerate(c.positions):
                curve_rows.append([run.j, fmt(run.t), ci, ni, fmt(x), fmt(y)])
        trace = _curve_ray(run.curves, center)
        right_rows.append([run.j, fmt(run.t), fmt(ms.rightmost_x(run.curves) - 0.5),
                           fmt(trace)])
        for ci, c in enumerate(run.curves):
            metric_rows.append([run_id, fmt(run.t), f"area_{ci}", fmt(ms.enclosed_area(c))])
        if snapshot_every and run.v is not None and (run.j % snapshot_every == 0
                                                     or run.j == n_steps):
            snap = out_dir / "snapshots"
            snap.mkdir(exist_ok=True)
            write_vtk(snap / f"step{run.j:07d}.vtk", run.mesh, {"v": run.v},
                      title=f"{run_id} t={fmt(run.t)}")

    record()
    while run.j < n_steps:
        dW = None
        if noise is not None and params.g != 0:
            dW = _noise_increment(noise, run.mesh, params.k, run.j)
        try:
            run = ms.advance(run, params, dW)
        except ms.TopologyError as exc:
            status = f"halted: {exc}"
            break
        except ms.MsError as exc:
            if "vanished" in str(exc):
                status = "all components vanished"
                break
            raise
        if run.j % output_every == 0 or run.j == n_steps:
            record()
    write_csv(out_dir / "curve.csv", ["step", "t", "component", "node", "x", "y"], curve_rows)
    write_csv(out_dir / "rightmost.csv", ["step", "t", "rightmost_shifted", "x_axis"], right_rows)
    write_csv(out_dir / "metrics.csv", METRIC_HEADER, metric_rows)
    write_csv(out_dir / "events.csv", ["event", "component", "step", "t"],
              [[e["event"], e["component"], e["step"], fmt(e["t"])] for e in run.events])
    summary = {"run_id": run_id, "steps": run.j, "t": fmt(run.t), "status": status,
               "components": len(run.curves),
               "extinction_t": fmt(run.events[0]["t"]) if run.events else "",
               "radius_final": fmt(max(math.sqrt(max(ms.enclosed_area(c), 0) / math.pi)
                                       for c in run.curves))}
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True) + "\n")
    return summary


def _curve_ray(curves, center) -> float:
    from .analysis import LevelSet
    chains = tuple(c.positions for c in curves)
    ls = LevelSet(chains, tuple(True for _ in chains), tuple(() for _ in chains), 0.0)
    return _ray_crossing(ls, center)


def run_ms(cfg: ExperimentConfig, halt_at=None) -> RunResult:
    """Front-tracking runs of ``cfg.interface`` (noise only if ``ms.g`` is non-zero)."""
    run_dir, man, t0 = _start(cfg, "ms")
    params = cfg.ms_params()
    n = _n_steps(cfg.T, params.k)
    curves = initial_curves(cfg.interface, params.n_curve)

    def runner(seed, r):
        noise = cfg.noise_spec(seed) if params.g != 0 else None
        return run_ms_realization(curves, params, noise, n, run_dir / f"r{r:03d}",
                                  f"ms_r{r:03d}", cfg.output_every, cfg.snapshot_every)

    res = monte_carlo(runner, cfg.seed_list(), metrics=["radius_final"])
    summary = [{k: row[k] for k in ("index", "seed", "status", "components", "extinction_t",
                                    "radius_final")} for row in res.rows]
    return _finish(run_dir, man, t0, summary, res.failures)


def run_ch_vs_ms(cfg: ExperimentConfig, halt_at=None) -> RunResult:
    """Phase-field runs per eps and a front-tracking run driven by the same noise path.

    The path lives on the MS time grid ``ms.k``; finer CH steps use its linear
    interpolation. Traces (x-axis crossing of the compensated level set, shifted
    by -0.5) are written on the common output grid ``output_every * ms.k``.
    """
    run_dir, man, t0 = _start(cfg)
    msp = cfg.ms_params()
    g = cfg.ch.get("g", 0.0)
    if "g" not in cfg.ms:
        msp = replace(msp, g=g)
    spec0 = cfg.noise_spec(cfg.seed_list()[0])
    if g != 0 and spec0.variant != SMOOTH:
        raise ValueError("ch_vs_ms needs the smooth_cosine noise variant")
    dt_out = cfg.output_every * msp.k
    n_ms = _n_steps(cfg.T, msp.k)
    summary, failures = [], []
    for r, seed in enumerate(cfg.seed_list()):
        path = generate_path(cfg.noise_spec(seed), None, msp.k, n_ms, lazy=True)
        base = run_dir / f"r{r:03d}"
        try:
            ms_sum = run_ms_realization(initial_curves("circle", msp.n_curve), msp,
                                        path if g != 0 else None, n_ms, base / "ms",
                                        f"ms_r{r:03d}", cfg.output_every, cfg.snapshot_every)
        except Exception as exc:  # noqa: BLE001
            failures.append({"index": r, "seed": seed, "run": "ms", "error": str(exc)})
            continue
        _, mrows = read_csv(base / "ms" / "rightmost.csv")
        ms_trace = {round(float(t) / dt_out): float(x) for _, t, _, x in mrows}
        for i, eps in enumerate(cfg.eps_list):
            params = cfg.ch_params(i, gamma=0.0)
            sub = _n_steps(dt_out, params.k)
            state0 = relaxed_state(cfg, i, ch.Circle())
            level = compensated_level(state0.X, _probe(cfg, ch.Circle()))
            noise = refine_time_grid(path, params.k) if g != 0 else None

            def observe(state, level=level):
                ls = extract_level_set(state.X, level)
                return {"x_trace": _ray_crossing(ls, (0.5, 0.5)) if len(ls) else np.nan}

            out = base / _eps_tag(i)
            try:
                run_ch_realization(state0, params, noise, _n_steps(cfg.T, params.k), out,
                                   f"{_eps_tag(i)}_r{r:03d}", observe, sub, cfg.snapshot_every,
                                   cfg.checkpoint_every, halt_at)
            except (RunInterrupted, KeyboardInterrupt):
                raise
            except Exception as exc:  # noqa: BLE001
                failures.append({"index": r, "seed": seed, "eps": eps, "error": str(exc)})
                continue
            _, crow = read_csv(out / "metrics.csv")
            trace_rows, dist = [], 0.0
            for _, t, _, v in crow:
                n_out = round(float(t) / dt_out)
                x_ch = float(v)
                x_ms = ms_trace.get(n_out, np.nan)
                trace_rows.append([n_out, fmt(n_out * dt_out), fmt(x_ch), fmt(x_ms)])
                dist = max(dist, abs(x_ch - x_ms))
            write_csv(out / "traces.csv", ["out_step", "t", "ch_x_axis_shifted",
                                           "ms_x_axis_shifted"], trace_rows)
            summary.append({"index": r, "seed": seed, "eps": fmt(eps), "level": fmt(level),
                            "sup_distance": fmt(dist), "ms_status": ms_sum["status"]})
    return _finish(run_dir, man, t0, summary, failures)


def run_spectral_check(cfg: ExperimentConfig, halt_at=None) -> RunResult:
    """lambda_min of the linearized operator at relaxed circle profiles, plus a u = 1 control."""
    run_dir, man, t0 = _start(cfg)
    rows, failures = [], []
    state = relaxed_state(cfg, 0, ch.Circle())
    one = FeFunction(state.mesh, np.ones(state.mesh.num_nodes))
    cases = [("control_u1", 0, lambda: one)]
    cases += [("relaxed_circle", i, (lambda i=i: relaxed_state(cfg, i, ch.Circle()).X))
              for i in range(len(cfg.eps_list))]
    for label, i, make in cases:
        eps = cfg.eps_list[i]
        try:
            u = make()
            res = spectral_constant(u, eps, seed=cfg.base_seed)
            rows.append({"case": label, "eps": fmt(eps), "lambda_min": fmt(res.lam),
                         "lower_bound": fmt(res.lower), "residual": fmt(res.residual),
                         "dofs": u.mesh.num_nodes, "iterations": res.iterations})
        except SpectralError as exc:
            failures.append({"case": label, "eps": eps, "error": str(exc)})
    return _finish(run_dir, man, t0, rows, failures)


def run_custom(cfg: ExperimentConfig, halt_at=None) -> RunResult:
    """Single phase-field configuration: circle or two circles, per config."""
    if cfg.interface == "two_circles":
        return run_two_circles(cfg, halt_at)
    return run_one_circle(cfg, halt_at)


RECIPES = {
    "one_circle": run_one_circle,
    "two_circles": run_two_circles,
    "gamma_sweep": run_gamma_sweep,
    "ch_vs_ms": run_ch_vs_ms,
    "spectral_check": run_spectral_check,
    "custom": run_custom,
}


def run(cfg: ExperimentConfig, halt_at=None) -> RunResult:
    return RECIPES[cfg.experiment](cfg, halt_at)


def resume(run_dir, halt_at=None) -> RunResult:
    """Continue a run from its directory: finished realizations are kept,
    interrupted ones restart from their checkpoint."""
    from .config import load
    from .config import OUTPUT_ROOT_ENV
    run_dir = Path(run_dir)
    cfg = load(run_dir / "config.toml")
    if cfg.run_dir().name != run_dir.name:
        raise ValueError(f"{run_dir} does not match its config hash")
    old = os.environ.get(OUTPUT_ROOT_ENV)
    os.environ[OUTPUT_ROOT_ENV] = str(run_dir.parent)
    try:
        return run(cfg, halt_at)
    finally:
        if old is None:
            os.environ.pop(OUTPUT_ROOT_ENV, None)
        else:
            os.environ[OUTPUT_ROOT_ENV] = old
