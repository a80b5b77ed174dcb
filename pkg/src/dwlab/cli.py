"""Command-line runner: ``dwlab <spectrum|pressure|decay|verify-gap> --config PATH --out DIR``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import io as dio
from .config import ConfigError, RunConfig, config_hash, default_config, load_config
from .decay import CauchyData, decay_experiment
from .dynamics import BolzaFlow, DoublingMap, a_u_field, constant_field, phase_space
from .errors import InvalidInputError, NumericalError
from .geometry import Circle, Constant, FlatTorus, MatrixInput, Samples, SmoothedStrip
from .hyperbolic import BolzaSurface
from .pressure import PressureConfig, gap_condition, pressure_cover, pressure_schedule, pressure_separated
from .spectral import Spectrum, assemble_operator, linearize, solve_spectrum, spectral_gap, spectrum_diagnostics

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


@dataclass
class RunManifest:
    config_hash: str
    version: str
    experiment: str
    seed: int | None
    wall_time: float = 0.0
    stages: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "experiment": self.experiment,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "stages": self.stages,
            "outputs": self.outputs,
            "status": self.status,
            "error": self.error,
        }


# ---------------------------------------------------------------------------
# builders


def build_geometry(cfg: RunConfig):
    g = cfg.geometry
    if g.kind == "circle":
        return Circle(length=g.length, n=g.n)
    if g.kind == "torus":
        return FlatTorus(lx=g.lx, ly=g.ly, nx=g.nx, ny=g.ny)
    if g.kind == "matrix":
        return MatrixInput(path=g.path, volume=g.volume)
    if g.kind == "bolza":
        return BolzaSurface()
    return DoublingMap()


def build_damping(cfg: RunConfig):
    d = cfg.damping
    if d.kind == "constant":
        return Constant(d.a0)
    if d.kind == "strip":
        return SmoothedStrip(d.center, d.width, d.a0, d.smoothing, d.axis)
    return Samples(tuple(d.values))


def build_data(cfg: RunConfig, geometry, seed: int) -> CauchyData:
    spec = cfg.decay.data
    if spec.kind == "constant":
        n = geometry.size
        return CauchyData(np.ones(n), np.zeros(n), geometry)
    pts = geometry.points() if not isinstance(geometry, MatrixInput) else None
    if pts is None:
        rng = np.random.default_rng(seed)
        v = rng.normal(size=geometry.size)
        return CauchyData(v, np.zeros_like(v), geometry)
    periods = np.asarray(geometry.periods)
    if spec.kind == "mode":
        phase = 2 * np.pi * spec.k * pts[:, 0] / periods[0]
        return CauchyData(np.exp(1j * phase), np.zeros(len(pts)), geometry)
    # random smooth trigonometric data with coefficients decaying like |k|^-2
    rng = np.random.default_rng(seed)
    u0 = np.zeros(len(pts), dtype=complex)
    u1 = np.zeros(len(pts), dtype=complex)
    for k in range(1, spec.n_modes + 1):
        for ax in range(pts.shape[1]):
            phase = 2 * np.pi * k * pts[:, ax] / periods[ax]
            c0, c1 = rng.normal(size=2) / k**2
            u0 += c0 * np.cos(phase + rng.uniform(0, 2 * np.pi))
            u1 += 1j * c1 * np.sin(phase + rng.uniform(0, 2 * np.pi))
    return CauchyData(u0, u1, geometry)


def _pressure_config(cfg: RunConfig, seed: int, continuous: bool) -> PressureConfig:
    p = cfg.pressure
    kwargs = dict(
        delta=p.delta,
        sample_budget=p.sample_budget,
        seed=seed,
        leaf_window=p.leaf_window,
        cover_diameter=p.cover_diameter,
    )
    kwargs["epsilon_list"] = tuple(p.epsilon_list) if p.epsilon_list else (0.2, 0.1, 0.05)
    kwargs["T_list"] = tuple(p.T_list) if p.T_list else ((2, 4, 6, 8) if continuous else (4, 6, 8, 10))
    return PressureConfig(**kwargs)


def _pressure_field(space, damping):
    if isinstance(space, DoublingMap):
        if not isinstance(damping, Constant):
            raise InvalidInputError("the doubling-map fixture only supports constant damping (f = -a0)")
        return constant_field(-damping.a0)
    return a_u_field(space, damping)


# ---------------------------------------------------------------------------
# stages


def _run_spectrum(cfg, geometry, damping, out, manifest, series):
    op = assemble_operator(geometry, damping)
    spec = solve_spectrum(linearize(op), max_dim=cfg.spectrum.max_dim)
    report = spectrum_diagnostics(spec, cfg.spectrum.lambdas)
    manifest.stages["spectrum"] = {"dimension": len(spec), **spec.provenance}
    _emit(out, manifest, "spectrum.csv", dio.write_spectrum_csv, spec)
    _emit(out, manifest, "diagnostics.json", dio.write_diagnostics_json, report)
    for i, t in enumerate(spec.eigenvalues):
        series.append(("spectrum", i, t.real, t.imag))
    for row in report.weyl:
        lam = float(row["lambda"])
        series.append(("weyl_measured", lam, lam, float(row["measured"])))
        series.append(("weyl_predicted", lam, lam, float(row["predicted"])))
    return spec


def _run_pressure(cfg, geometry, damping, seed, out, manifest, series):
    space = phase_space(geometry)
    f = _pressure_field(space, damping)
    pcfg = _pressure_config(cfg, seed, getattr(space, "continuous", True))
    estimator = {"schedule": pressure_schedule, "separated": pressure_separated, "cover": pressure_cover}[
        cfg.pressure.estimator
    ]
    est = estimator(space, f, pcfg)
    verdict = gap_condition(est, cfg.pressure.margin)
    manifest.stages["pressure"] = {
        "estimator": cfg.pressure.estimator,
        "epsilon_list": list(pcfg.epsilon_list),
        "T_list": list(pcfg.T_list),
        "sample_budget": pcfg.sample_budget,
        "seed": seed,
        "params": {k: v for k, v in est.params.items()},
    }
    _emit(out, manifest, "pressure.csv", dio.write_pressure_table, est.table_rows())
    _emit(out, manifest, "gap_verdict.json", dio.write_json, verdict.to_dict())
    for row in est.table:
        series.append((f"pressure_eps={row.params['eps']!r}", row.params["T"], 1.0 / row.params["T"], row.value))
    return est, verdict


def _run_decay(cfg, geometry, damping, seed, out, manifest, series):
    op = assemble_operator(geometry, damping)
    d = cfg.decay
    spec = solve_spectrum(linearize(op), want_vectors=(d.method == "modal"), max_dim=cfg.spectrum.max_dim)
    data = build_data(cfg, geometry, seed)
    report = decay_experiment(
        op,
        data,
        horizon=d.horizon,
        damping=damping,
        method=d.method,
        output_step=d.output_step,
        dyn_horizon=d.dyn_horizon,
        dyn_samples=d.dyn_samples,
        seed=seed,
        spectrum=spec,
    )
    manifest.stages["decay"] = {
        "horizon": d.horizon,
        "method": d.method,
        "output_step": d.output_step,
        "dyn_horizon": d.dyn_horizon,
        "dyn_samples": d.dyn_samples,
        "seed": seed,
        "data": d.data.model_dump(),
    }
    _emit(out, manifest, "spectrum.csv", dio.write_spectrum_csv, spec)
    _emit(out, manifest, "energy.csv", dio.write_energy_csv, report.series)
    _emit(out, manifest, "decay_report.json", dio.write_json, report.to_dict())
    for t, e in zip(report.series.times, report.series.energies):
        series.append(("energy", "", float(t), float(e)))
    return report


def _run_verify_gap(cfg, geometry, damping, seed, out, manifest, series):
    est, verdict = _run_pressure(cfg, geometry, damping, seed, out, manifest, series)
    gap = None
    if cfg.verify_gap.spectrum_csv:
        tau = dio.read_spectrum_csv(cfg.verify_gap.spectrum_csv)
        spec = Spectrum(eigenvalues=tau, sup_damping=float("nan"), norm=float(np.max(np.abs(tau))) if tau.size else 1.0)
        gap = spectral_gap(spec)
        manifest.stages["spectrum"] = {"source": cfg.verify_gap.spectrum_csv}
    elif isinstance(geometry, (Circle, FlatTorus, MatrixInput)):
        spec = _run_spectrum(cfg, geometry, damping, out, manifest, series)
        gap = spectral_gap(spec)
    rate_side = abs(verdict.threshold)
    payload = {
        **verdict.to_dict(),
        "G": gap,
        "pressure_side": rate_side,
        "rho_min": None if gap is None else min(gap, rate_side),
        "binding": None if gap is None else ("G" if gap < rate_side else "pressure"),
        "anosov": isinstance(phase_space(geometry), (BolzaFlow, DoublingMap)),
    }
    _emit(out, manifest, "verify_gap.json", dio.write_json, payload)
    return payload


# ---------------------------------------------------------------------------
# reporting


def _emit(out: Path, manifest: RunManifest, name: str, writer, payload):
    path = writer(out / name, payload)
    manifest.outputs.append({"file": name, "sha256": dio.sha256_file(path)})
    return path


def emit_report(manifest: RunManifest, out: Path, series: list) -> None:
    """Write the long-format ``series.csv`` and the manifest (listing every file with its hash)."""
    _emit(out, manifest, "series.csv", _write_series, series)
    dio.write_json(out / "manifest.json", manifest.to_dict())


def _write_series(path, rows):
    return dio.write_csv(path, ["series", "key", "x", "y"], rows)


def _check_output_dir(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".dwlab-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InvalidInputError(f"output directory {out} is not writable: {exc}") from None


def run_experiment(cfg: RunConfig, out_dir=None) -> RunManifest:
    """Run one pipeline and write its artifacts; failures keep partial output and a manifest."""
    out = Path(out_dir or cfg.output or "dwlab-out")
    _check_output_dir(out)
    seed = 0 if cfg.seed is None else int(cfg.seed)
    manifest = RunManifest(config_hash(cfg), __version__, cfg.experiment, cfg.seed)
    manifest.stages["config"] = cfg.model_dump(mode="json")
    series: list = []
    geometry = build_geometry(cfg)
    damping = build_damping(cfg)
    start = time.perf_counter()
    try:
        if cfg.experiment == "spectrum":
            _run_spectrum(cfg, geometry, damping, out, manifest, series)
        elif cfg.experiment == "pressure":
            _run_pressure(cfg, geometry, damping, seed, out, manifest, series)
        elif cfg.experiment == "decay":
            _run_decay(cfg, geometry, damping, seed, out, manifest, series)
        else:
            _run_verify_gap(cfg, geometry, damping, seed, out, manifest, series)
    except Exception as exc:
        manifest.status = "failed"
        manifest.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        manifest.wall_time = time.perf_counter() - start
        emit_report(manifest, out, series)
    return manifest


# ---------------------------------------------------------------------------
# entry point


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("DWLAB_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InvalidInputError(f"DWLAB_THREADS must be an integer, got {env!r}") from None
    return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dwlab", description="Damped-wave spectra, pressure and decay experiments.")
    parser.add_argument("experiment", choices=["spectrum", "pressure", "decay", "verify-gap"])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="random seed (overrides the config)")
    parser.add_argument("--threads", type=int, help="BLAS thread cap (default: $DWLAB_THREADS)")
    parser.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.print_defaults:
        print(json.dumps(default_config(args.experiment), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        if not args.config:
            raise ConfigError(["--config is required"])
        cfg = load_config(args.config, experiment=args.experiment, seed=args.seed, output=args.out)
        threads = _threads(args.threads)
        if threads is not None and threads < 1:
            raise InvalidInputError(f"--threads must be >= 1, got {threads}")
        with threadpool_limits(limits=threads):
            manifest = run_experiment(cfg, args.out)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps({"status": manifest.status, "outputs": [o["file"] for o in manifest.outputs]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
