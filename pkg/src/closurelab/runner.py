"""Run orchestration: config in, artifact directory and exit status out."""
from __future__ import annotations

import logging
import platform
import time
import zipfile
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path

import numpy as np

from . import __version__
from . import closures as cl
from . import diagnostics as dg
from . import oscillator as osc
from .config import PeakedSpectrum, RunConfig
from .history import NumericalBlowup, TimeGrid
from .io import emit_csv, emit_json
from .kernel import build_grid

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def initial_spectrum(cfg: RunConfig, k):
    s = cfg.initial_spectrum
    if isinstance(s, PeakedSpectrum):
        return cl.peaked_spectrum(k, s.amplitude, s.k_peak)
    return cl.power_exp_spectrum(k, s.c, s.exponent, s.cutoff)


def build_decay_state(cfg: RunConfig) -> cl.ClosureState:
    g = cfg.grid
    grid = build_grid(g.k_min, g.k_max, g.n_k, g.n_mu, kernel_sign=cfg.kernel_sign)
    times = TimeGrid(cfg.time.dt, cfg.time.n_steps)
    return cl.init_state(grid, times, cfg.closure, cfg.nu, initial_spectrum(cfg, grid.k_nodes),
                         eps_floor=cfg.eps_floor, nonlinear=cfg.nonlinear,
                         track_response=cfg.track_response, diagonal_mode=cfg.diagonal_mode)


@dataclass
class DecayOutcome:
    state: cl.ClosureState
    energy: list
    residual: list
    blowup: NumericalBlowup | None = None
    seconds: float = 0.0

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.energy) <= 0))


def run_decay(cfg: RunConfig, progress=None) -> DecayOutcome:
    """Integrate the configured free decay, stopping cleanly on blowup."""
    state = build_decay_state(cfg)
    energy = [dg.spectrum(state, 0).total_energy]
    residual = []
    blowup = None
    start = time.perf_counter()
    try:
        for _ in range(cfg.time.n_steps):
            cl.advance(state)
            residual.append(dg.transfer_conservation(state, state.M - 1))
            energy.append(float(dg.total_energy_series(state)[-1]))
            if progress is not None:
                progress(state)
    except NumericalBlowup as exc:
        blowup = exc
        log.error("blowup: %s", exc)
    residual.append(dg.transfer_conservation(state, state.M))
    return DecayOutcome(state, energy, residual, blowup, time.perf_counter() - start)


def _save_npz(path: Path, arrays: dict) -> None:
    """``np.savez`` equivalent with fixed member timestamps (byte-stable)."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            buf = BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, buf.getvalue())


def _decay_artifacts(cfg: RunConfig, out: Path, outcome: DecayOutcome) -> tuple[list, dict]:
    st = outcome.state
    grid, times = st.grid, st.times
    files = []
    M = st.M
    if "spectrum" in cfg.emit:
        rows = sorted(set(range(0, M + 1, cfg.output.spectrum_every)) | {M})
        for m in rows:
            snap = dg.spectrum(st, m)
            files.append(emit_csv({"k": snap.k, "E": snap.E_of_k, "Q_diag": snap.Q_diag},
                                  out / f"spectrum_t{m:04d}.csv"))
    if "decorrelation" in cfg.emit:
        ks = cfg.output.decorrelation_k or [grid.n_k // 4, grid.n_k // 2, 3 * grid.n_k // 4]
        tp = times.t(np.arange(M + 1))
        for k in ks:
            ref = dg.viscous_decorrelation(st.nu, grid.k_nodes[k], times.t(M) - tp)
            files.append(emit_csv({"t_prime": tp, "ratio": dg.decorrelation_curve(st, k),
                                   "exact_viscous_ref": ref}, out / f"decorrelation_k{k:02d}.csv"))
    if "conservation" in cfg.emit:
        files.append(emit_csv({"t": times.t(np.arange(len(outcome.residual))),
                               "residual": outcome.residual}, out / "conservation.csv"))
    if "two_time_dump" in cfg.emit:
        arrays = {"k": grid.k_nodes, "t": times.t(np.arange(M + 1)), "Q": st.Q.dense()}
        if st.H is not None:
            arrays["H"] = st.H.dense()
        if st.G is not None:
            arrays["G"] = st.G.dense()
        path = out / "two_time.npz"
        _save_npz(path, arrays)
        files.append(path)

    dissipation = [dg.spectrum(st, m).dissipation_rate for m in range(M + 1)]
    summary = {
        "mode": "decay",
        "closure": cfg.closure,
        "status": "blowup" if outcome.blowup else "ok",
        "steps_completed": M,
        "total_energy": outcome.energy,
        "dissipation_rate": dissipation,
        "energy_monotone": outcome.monotone,
        "max_conservation_residual": max(outcome.residual),
        "negative_spectrum_steps": int(sum(bool(f.any()) for f in st.negative_flags)),
        "event_counts": dict(st.events.counts),
    }
    if cfg.sweeping.v0_sq > 0:
        ks = cfg.output.decorrelation_k or [grid.n_k // 4, grid.n_k // 2, 3 * grid.n_k // 4]
        tau = times.t(M) - times.t(np.arange(M + 1))
        params = dg.SweepingParams(cfg.sweeping.v0_sq)
        summary["sweeping_reference"] = {
            str(k): dg.sweeping_factor(params, grid.k_nodes[k], tau) for k in ks}
    if outcome.blowup:
        b = outcome.blowup
        summary["blowup"] = {"k_index": b.k_index, "m": b.m, "n": b.n, "field": b.field}
    return files, summary


def _oscillator_artifacts(cfg: RunConfig, out: Path, threads: int) -> tuple[list, dict]:
    o = cfg.oscillator
    params = osc.OscillatorParams(cfg.nu, o.b_var, o.q0_sq)
    times = TimeGrid(cfg.time.dt, cfg.time.n_steps)
    solve = osc.rget_solve if cfg.closure == "RGET" else osc.dia_solve
    st = solve(params, times)
    rows = np.arange(0, times.n_steps + 1, o.output_every)
    t = times.t(rows)
    series = {
        "t": t,
        "Q_exact": osc.exact_equal_time(params, t),
        "Q_closure": st.Qd[rows],
        "G_exact": osc.exact_response(params, t, 0.0),
        "G_closure": st.G[rows, 0],
    }
    summary = {"mode": "oscillator", "closure": cfg.closure, "status": "ok"}
    if o.n_samples:
        mc = osc.monte_carlo_oracle(params, o.n_samples, t, cfg.seed, threads=threads)
        series["Q_mc"] = mc.Qd.real
        series["Q_mc_stderr"] = mc.Qd_se.real
        summary["mc_max_sigma"] = float(np.max(np.abs(mc.Qd.real - series["Q_exact"])
                                               / np.where(mc.Qd_se.real > 0, mc.Qd_se.real, np.inf)))
    ex = osc.exact_state(params, times)
    lower = np.tril(np.ones(ex.Q.shape, dtype=bool))
    summary["max_rel_error"] = {
        "two_time": float(np.max(np.abs(st.Q[lower] / ex.Q[lower] - 1))),
        "equal_time": float(np.max(np.abs(st.Qd / ex.Qd - 1))),
        "response": float(np.max(np.abs(st.G[lower] / ex.G[lower] - 1))),
    }
    if cfg.closure == "RGET":
        summary["constraint_residuals"] = osc.constraint_residuals(st, params)
    files = [emit_csv(series, out / "oscillator.csv")]
    return files, summary


def _oracle_artifacts(cfg: RunConfig, out: Path, threads: int) -> tuple[list, dict]:
    from .acceptance import brute_force_deviations

    dev = brute_force_deviations(cfg.seed, kernel_sign=cfg.kernel_sign)
    o = cfg.oscillator
    params = osc.OscillatorParams(cfg.nu, o.b_var, o.q0_sq)
    n = o.n_samples or 100_000
    t = np.array([0.5, 1.0, 2.0])
    mc = osc.monte_carlo_oracle(params, n, t, cfg.seed, threads=threads)
    T, Tp = np.meshgrid(t, t, indexing="ij")
    z = np.abs(mc.Q.real - osc.exact_two_time(params, T, Tp)) / mc.Q_se.real
    summary = {
        "mode": "oracle",
        "brute_force_max_rel_deviation": dev,
        "brute_force_pass": bool(max(dev.values()) <= 1e-12),
        "mc_max_sigma": float(z.max()),
        "mc_pass": bool(z.max() <= 3.0),
    }
    summary["status"] = "ok" if summary["brute_force_pass"] and summary["mc_pass"] else "mismatch"
    return [], summary


def run(cfg: RunConfig, out_dir=None, threads: int = 1) -> RunResult:
    """Execute ``cfg`` and write its artifacts; returns the exit status."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    exit_code = EXIT_OK
    events = {}
    if cfg.mode == "decay":
        outcome = run_decay(cfg)
        files, summary = _decay_artifacts(cfg, out, outcome)
        events = summary["event_counts"]
        if outcome.blowup:
            exit_code = EXIT_BLOWUP
    elif cfg.mode == "oscillator":
        try:
            files, summary = _oscillator_artifacts(cfg, out, threads)
        except NumericalBlowup as exc:
            files, summary = [], {"mode": "oscillator", "status": "blowup", "error": str(exc)}
            exit_code = EXIT_BLOWUP
    else:
        files, summary = _oracle_artifacts(cfg, out, threads)
        if summary["status"] != "ok":
            exit_code = EXIT_FAILED
    files.append(emit_json(summary, out / "summary.json"))
    manifest = {
        "code_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        "config": cfg.to_dict(),
        "status": summary.get("status"),
        "exit_code": exit_code,
        "event_counts": events,
        "files": sorted(p.name for p in files) + ["manifest.json"],
    }
    files.append(emit_json(manifest, out / "manifest.json"))
    return RunResult(exit_code, out, files, summary)
