"""Command-line front end: config ingestion, sweeps, and file emission.

Subcommands: spectrum | stability | timedomain | phasemap.  Exit codes:
0 success, 2 config error, 3 numerical failure (with cell coordinates).
Grid commands run detuning columns in parallel, checkpoint each finished
column, and merge deterministically, so outputs are byte-identical for
any worker count and across kill/resume cycles.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing as mp
import os
import shutil
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from . import dynamics, linresp, stability
from .config import ConfigError, RunConfig, parse_config
from .model import (
    DeviceParams,
    PumpDrive,
    dbm_to_watt,
    dimensionless_power,
    resonant_photon_number,
    resolve_operating_point,
)
from .stability import GridSpec
from .transient import compare_linear_nonlinear, transient_linear_response

SCHEMA_VERSION = 1


class CellFailure(RuntimeError):
    def __init__(self, detuning_hz, power_dbm, cause):
        super().__init__(
            f"numerical failure at detuning_hz={detuning_hz:.6g}, "
            f"power_dbm={power_dbm:.6g}: {cause}"
        )


def _fmt(value) -> str:
    if isinstance(value, float):
        if np.isnan(value):
            return "nan"
        return f"{value:.17g}"
    if value is None:
        return "nan"
    return str(value)


def emit_csv(path: Path, schema: str, cfg_hash: str, columns: Sequence[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# omcavity {__version__}\n")
        fh.write(f"# schema: {schema}/{SCHEMA_VERSION}\n")
        fh.write(f"# config_sha256: {cfg_hash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _probe_grid(cfg: RunConfig) -> np.ndarray:
    pr = cfg.values["probe"]
    for key in ("freq_start_hz", "freq_stop_hz", "points"):
        if pr[key] is None:
            raise ConfigError(f"probe.{key}", "required for spectrum runs")
    if pr["freq_stop_hz"] <= pr["freq_start_hz"]:
        raise ConfigError("probe.freq_stop_hz", "must exceed freq_start_hz")
    return np.linspace(pr["freq_start_hz"], pr["freq_stop_hz"], pr["points"])


def _drive_pump(cfg: RunConfig, sweep: str) -> PumpDrive:
    d = cfg.values["drive"]
    if d["detuning_hz"] is None:
        raise ConfigError("drive.detuning_hz", "required")
    given = [k for k in ("power_dbm", "power_w", "amplitude") if d[k] is not None]
    if len(given) != 1:
        raise ConfigError("drive", "specify exactly one of power_dbm, power_w, amplitude")
    if d["power_dbm"] is not None:
        return PumpDrive(
            detuning_hz=d["detuning_hz"],
            power_w=cfg.power_at_cavity_w(d["power_dbm"]),
            sweep=sweep,
        )
    if d["power_w"] is not None:
        return PumpDrive(detuning_hz=d["detuning_hz"], power_w=d["power_w"], sweep=sweep)
    return PumpDrive(detuning_hz=d["detuning_hz"], amplitude=d["amplitude"], sweep=sweep)


def cmd_spectrum(cfg: RunConfig, out_dir: Path) -> List[Path]:
    params = cfg.device()
    sweep = cfg.values["run"]["sweep"]
    grid = _probe_grid(cfg)
    d = cfg.values["drive"]
    cfg_hash = cfg.config_hash()
    sweep_keys = (d["pump_freq_start_hz"], d["pump_freq_stop_hz"], d["pump_freq_points"])
    if any(v is not None for v in sweep_keys):
        if any(v is None for v in sweep_keys):
            raise ConfigError("drive", "pump sweep needs start, stop and points")
        pump0 = _drive_pump(cfg, sweep)
        power_w = pump0.injected_power_w(params)
        pump_freqs = np.linspace(*sweep_keys)
        rows = []
        for wd in pump_freqs:
            pump = PumpDrive(
                detuning_hz=wd - params.cavity_freq_hz, power_w=power_w, sweep=sweep
            )
            trace = linresp.spectrum(grid, params, pump)
            for f, t in zip(trace.freq_hz, trace.abs_t):
                rows.append((wd, f, t))
        path = out_dir / "map.csv"
        emit_csv(path, "spectrum_map", cfg_hash, ("pump_freq_hz", "probe_freq_hz", "abs_T"), rows)
        return [path]
    pump = _drive_pump(cfg, sweep)
    trace = linresp.spectrum(grid, params, pump)
    rows = [
        (f, t.real, t.imag, abs(t)) for f, t in zip(trace.freq_hz, trace.t_complex)
    ]
    path = out_dir / "trace.csv"
    emit_csv(path, "spectrum_trace", cfg_hash, ("freq_hz", "re_T", "im_T", "abs_T"), rows)
    return [path]


def _grid_spec(cfg: RunConfig) -> GridSpec:
    g = cfg.values["grid"]
    for key in ("detuning_start_hz", "detuning_stop_hz", "power_start_dbm", "power_stop_dbm"):
        if g[key] is None:
            raise ConfigError(f"grid.{key}", "required for grid runs")
    if g["detuning_stop_hz"] < g["detuning_start_hz"]:
        raise ConfigError("grid.detuning_stop_hz", "must be >= detuning_start_hz")
    if g["power_stop_dbm"] < g["power_start_dbm"]:
        raise ConfigError("grid.power_stop_dbm", "must be >= power_start_dbm")
    return GridSpec(
        detuning_start_hz=g["detuning_start_hz"],
        detuning_stop_hz=g["detuning_stop_hz"],
        power_start_dbm=g["power_start_dbm"],
        power_stop_dbm=g["power_stop_dbm"],
        detuning_step_hz=g["detuning_step_hz"],
        power_step_dbm=g["power_step_dbm"],
    )


def _kerr_tag(value_hz: float) -> str:
    return f"kerr_{value_hz * 1e3:g}mhz"


def _stability_column(args):
    cfg_values, det, powers, sweep, atten = args
    params = DeviceParams(**{k: v for k, v in cfg_values.items() if v is not None})
    col = stability.classify_column(
        params, det, np.asarray(powers) - atten, sweep
    )
    return [
        (res.cell_class, res.max_re_lambda, len(res.branches), res.occupied)
        for res in col
    ]


def cmd_stability(cfg: RunConfig, out_dir: Path, workers: int, resume: bool) -> List[Path]:
    params = cfg.device()
    sweep = cfg.values["run"]["sweep"]
    spec = _grid_spec(cfg)
    atten = cfg.values["drive"]["attenuation_db"]
    kerr_values = cfg.values["stability"]["kerr_values_hz"]
    if kerr_values is None:
        kerr_values = [params.cavity_kerr_hz]
    cfg_hash = cfg.config_hash()
    dets = spec.detunings()
    pows = spec.powers_dbm()
    paths = []
    many = len(kerr_values) > 1
    for kerr in kerr_values:
        pk = params.with_kerr(kerr)
        device_values = dict(cfg.values["device"])
        device_values["cavity_kerr_hz"] = kerr
        tag = f"_{_kerr_tag(kerr)}" if many else ""
        jobs = [(device_values, det, pows, sweep, atten) for det in dets]
        ckpt = _CheckpointRunner(
            out_dir, f"stability{tag}", cfg_hash, len(jobs), resume
        )
        results = ckpt.run(_stability_column, jobs, workers)
        map_rows = []
        for i, det in enumerate(dets):
            for j, pw in enumerate(pows):
                cls, maxre, nbr, _occ = results[i][j]
                map_rows.append((det, pw, cls, maxre, nbr))
        map_path = out_dir / f"phase_map{tag}.csv"
        emit_csv(
            map_path,
            "stability_map",
            cfg_hash,
            ("detuning_hz", "power_dbm", "class", "max_re_lambda", "n_branches"),
            map_rows,
        )
        bnd_rows = []
        for i, det in enumerate(dets):
            thresh = np.nan
            for j, pw in enumerate(pows):
                if results[i][j][0] == stability.UNSTABLE:
                    thresh = pw
                    break
            if np.isnan(thresh):
                bnd_rows.append((det, np.nan, np.nan))
            else:
                n0 = resonant_photon_number(pk, dbm_to_watt(thresh - atten))
                p_dimless = dimensionless_power(
                    pk.single_photon_coupling_hz, n0, pk.mech_freq_hz
                )
                bnd_rows.append((det, thresh, p_dimless))
        bnd_path = out_dir / f"boundary{tag}.csv"
        emit_csv(
            bnd_path,
            "stability_boundary",
            cfg_hash,
            ("detuning_hz", "threshold_dbm", "threshold_P"),
            bnd_rows,
        )
        ckpt.cleanup()
        paths.extend([map_path, bnd_path])
    return paths


def cmd_timedomain(cfg: RunConfig, out_dir: Path) -> List[Path]:
    params = cfg.device()
    sweep = cfg.values["run"]["sweep"]
    mode = cfg.values["pulse"]["mode"]
    cfg_hash = cfg.config_hash()
    d = cfg.values["drive"]
    if d["detuning_hz"] is None:
        raise ConfigError("drive.detuning_hz", "required")
    pr = cfg.values["probe"]
    integ = cfg.values["integrator"]
    psdc = cfg.values["psd"]
    paths = []
    if mode == "compare":
        if pr["offset_hz"] is None:
            raise ConfigError("probe.offset_hz", "required for compare mode")
        pump = _drive_pump(cfg, sweep)
        t_span = integ["t_span_s"] or 20e-6
        dt = integ["sample_dt_s"] or 5e-9
        comp = compare_linear_nonlinear(
            params,
            pump,
            probe_offset_hz=pr["offset_hz"],
            probe_ratio=pr["probe_ratio"],
            t_span=t_span,
            sample_dt=dt,
        )
        for name, series in (("linear", comp.amode_linear), ("nonlinear", comp.amode_nonlinear)):
            rows = [
                (t, a.real, a.imag, abs(a)) for t, a in zip(comp.t, series)
            ]
            path = out_dir / f"quadratures_{name}.csv"
            emit_csv(path, f"timedomain_{name}", cfg_hash, ("t_s", "i", "q", "r"), rows)
            paths.append(path)
        summary = out_dir / "deviation.json"
        summary.parent.mkdir(parents=True, exist_ok=True)
        with open(summary, "w") as fh:
            json.dump(
                {
                    "config_sha256": cfg_hash,
                    "max_deviation": comp.max_deviation,
                    "probe_ratio": pr["probe_ratio"],
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
        paths.append(summary)
        return paths
    schedule = cfg.pulse_schedule()
    if mode == "linear":
        if pr["offset_hz"] is None:
            raise ConfigError("probe.offset_hz", "required for linear timedomain")
        dt = integ["sample_dt_s"] or 1.0 / (8.0 * params.mech_freq_hz)
        resp = transient_linear_response(
            params,
            d["detuning_hz"],
            schedule,
            dynamics.ProbeDrive(offset_hz=pr["offset_hz"], amplitude=pr["amplitude"]),
            sample_dt=dt,
            t_pre=cfg.values["pulse"]["t_pre_s"],
            sweep=sweep,
        )
        rows = list(zip(resp.t, resp.i_quad, resp.q_quad, resp.magnitude))
        path = out_dir / "quadratures.csv"
        emit_csv(path, "timedomain_linear", cfg_hash, ("t_s", "i", "q", "r"), rows)
        return [path]
    # nonlinear: integrate the schedule from the steady state of segment 0
    t_span = integ["t_span_s"] or sum(s.duration_s for s in schedule)
    pump_axis = PumpDrive(detuning_hz=d["detuning_hz"], power_w=0.0, sweep=sweep)
    first = schedule[0]
    if first.power_w is None and first.coupling_hz is None:
        state0 = np.zeros(4)
    else:
        from .transient import segment_operating
        from .model import photons_for_coupling

        g_hz, _de = segment_operating(params, d["detuning_hz"], first, sweep)
        if first.power_w is not None:
            op = resolve_operating_point(
                params,
                PumpDrive(detuning_hz=d["detuning_hz"], power_w=first.power_w, sweep=sweep),
            )
            state0 = np.array(op.fixed_point)
        else:
            n = photons_for_coupling(params.single_photon_coupling_hz, g_hz)
            a = params.angular
            wm_eff = a.wm + a.gm**2 / (4.0 * a.wm)
            p_bar = a.g0 * n / wm_eff
            state0 = np.array([0.0, 0.0, p_bar, a.gm / (2 * a.wm) * p_bar])
    try:
        traj = dynamics.integrate(
            params,
            pump_axis,
            state0,
            t_span,
            integ["sample_dt_s"],
            rtol=integ["rtol"],
            atol=integ["atol"],
            schedule=schedule,
        )
    except dynamics.IntegrationError as exc:
        raise CellFailure(d["detuning_hz"], float("nan"), exc) from exc
    rows = list(zip(traj.t, traj.x, traj.y, traj.p, traj.q))
    path = out_dir / "trajectory.csv"
    emit_csv(path, "timedomain_trajectory", cfg_hash, ("t_s", "x", "y", "p", "q"), rows)
    return [path]


def _phasemap_column(args):
    (device_values, det, powers_axis, atten, sweep, seed, col, t_span, sample_dt,
     rtol, atol, thresholds, transient_fraction) = args
    params = DeviceParams(**{k: v for k, v in device_values.items() if v is not None})
    powers_cavity = np.asarray(powers_axis) - atten
    stab = stability.classify_column(params, det, powers_cavity, sweep)
    rows = []
    for j, pw in enumerate(powers_cavity):
        res = stab[j]
        fp = res.branches[res.occupied]
        try:
            cell = dynamics.classify_cell(
                params,
                det,
                dbm_to_watt(pw),
                sweep,
                seed=seed,
                col=col,
                row=j,
                t_span=t_span,
                sample_dt=sample_dt,
                rtol=rtol,
                atol=atol,
                thresholds=thresholds,
                transient_fraction=transient_fraction,
                occupied_fp=fp.as_array(),
            )
        except dynamics.IntegrationError as exc:
            raise CellFailure(det, powers_axis[j], exc) from exc
        rows.append((cell.label, cell.comb_spacing_hz, cell.flatness))
    return rows


class _CheckpointRunner:
    """Column-wise work runner with atomic per-column checkpoints."""

    def __init__(self, out_dir: Path, name: str, cfg_hash: str, n_jobs: int, resume: bool):
        self.dir = out_dir / f".omcavity-{name}-{cfg_hash[:12]}"
        self.cfg_hash = cfg_hash
        self.n_jobs = n_jobs
        self.resume = resume
        if not resume and self.dir.exists():
            shutil.rmtree(self.dir)
        self.dir.mkdir(parents=True, exist_ok=True)

    def _col_path(self, i: int) -> Path:
        return self.dir / f"col_{i:06d}.json"

    def _load(self, i: int):
        path = self._col_path(i)
        if not path.exists():
            return None
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError):
            return None
        if payload.get("hash") != self.cfg_hash or payload.get("col") != i:
            return None
        return payload["rows"]

    def _store(self, i: int, rows) -> None:
        tmp = self._col_path(i).with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump({"hash": self.cfg_hash, "col": i, "rows": rows}, fh)
        os.replace(tmp, self._col_path(i))

    def run(self, worker, jobs, workers: int):
        results: List[Optional[list]] = [None] * self.n_jobs
        pending = []
        for i in range(self.n_jobs):
            cached = self._load(i) if self.resume else None
            if cached is not None:
                results[i] = [tuple(row) for row in cached]
            else:
                pending.append(i)
        if pending:
            if workers > 1:
                ctx = mp.get_context("fork")
                with ctx.Pool(processes=min(workers, len(pending))) as pool:
                    for i, rows in zip(
                        pending, pool.map(worker, [jobs[i] for i in pending])
                    ):
                        self._store(i, [list(r) for r in rows])
                        results[i] = rows
            else:
                for i in pending:
                    rows = worker(jobs[i])
                    self._store(i, [list(r) for r in rows])
                    results[i] = rows
        return results

    def cleanup(self) -> None:
        shutil.rmtree(self.dir, ignore_errors=True)


def cmd_phasemap(cfg: RunConfig, out_dir: Path, workers: int, resume: bool) -> List[Path]:
    params = cfg.device()
    sweep = cfg.values["run"]["sweep"]
    seed = cfg.values["run"]["seed"]
    spec = _grid_spec(cfg)
    atten = cfg.values["drive"]["attenuation_db"]
    integ = cfg.values["integrator"]
    t_span = integ["t_span_s"] or 4e-4
    cfg_hash = cfg.config_hash()
    dets = spec.detunings()
    pows = spec.powers_dbm()
    thresholds = cfg.thresholds()
    jobs = [
        (
            dict(cfg.values["device"]),
            det,
            pows,
            atten,
            sweep,
            seed,
            i,
            t_span,
            integ["sample_dt_s"],
            integ["rtol"],
            integ["atol"],
            thresholds,
            cfg.values["psd"]["transient_fraction"],
        )
        for i, det in enumerate(dets)
    ]
    ckpt = _CheckpointRunner(out_dir, "phasemap", cfg_hash, len(jobs), resume)
    results = ckpt.run(_phasemap_column, jobs, workers)
    rows = []
    for i, det in enumerate(dets):
        for j, pw in enumerate(pows):
            label, spacing, flat = results[i][j]
            rows.append((det, pw, label, spacing, flat))
    path = out_dir / "response_map.csv"
    emit_csv(
        path,
        "response_map",
        cfg_hash,
        ("detuning_hz", "power_dbm", "class", "comb_spacing_hz", "flatness"),
        rows,
    )
    ckpt.cleanup()
    return [path]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omcavity",
        description="semiclassical pumped-cavity optomechanics simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("spectrum", "pump-dressed transmission traces and pump-sweep maps"),
        ("stability", "fixed-point phase map and instability boundary"),
        ("timedomain", "pulsed-pump transients and nonlinear trajectories"),
        ("phasemap", "dynamics-based response classification map"),
    ):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--config", required=True, help="path to run config")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None, help="parallel workers")
        sp.add_argument("--seed", type=int, default=None, help="deterministic seed")
        sp.add_argument("--sweep", choices=("up", "down"), default=None)
        sp.add_argument("--resume", action="store_true", help="reuse checkpoints")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.values["run"]["seed"] = args.seed
        if args.sweep is not None:
            cfg.values["run"]["sweep"] = args.sweep
        if args.out is not None:
            cfg.values["run"]["out_dir"] = args.out
        workers = args.workers if args.workers is not None else cfg.values["run"]["workers"]
        out_dir = Path(cfg.values["run"]["out_dir"])
        if args.command == "spectrum":
            paths = cmd_spectrum(cfg, out_dir)
        elif args.command == "stability":
            paths = cmd_stability(cfg, out_dir, workers, args.resume)
        elif args.command == "timedomain":
            paths = cmd_timedomain(cfg, out_dir)
        else:
            paths = cmd_phasemap(cfg, out_dir, workers, args.resume)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CellFailure, dynamics.IntegrationError, stability.EigenSolveError,
            linresp.SingularMatrixError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
