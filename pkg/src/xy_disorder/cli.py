"""Command-line driver: ``xy-disorder <mode> --config cfg.json --out dir``.

Every mode writes plot-ready CSVs and a ``manifest.json`` recording the
config, seed, version, estimate diagnostics and output hashes. Exit codes:
0 success, 2 bad config, 3 estimate refused (or no sigma_c in the
bracket), 4 engine failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    Curve,
    DerivativeMinimum,
    GridMode,
    Label,
    classify_segments,
    derivative_min,
    NonMonotoneTransition,
    find_sigma_c,
    label_nodes,
)
from .averaging import (
    BondPolicy,
    annealed_concurrence_curve,
    default_workers,
    quenched_curve,
)
from .chain import ChainSpec
from .config import Averaging, ConfigError, Mode, RunConfig, validate_config
from .ed import compare_with_engine
from .entanglement import NonPhysicalState
from .estimators import EstimateRefused
from .fermions import EngineError
from .streams import derive_substream

log = logging.getLogger("xy_disorder")

EXIT_OK, EXIT_CONFIG, EXIT_REFUSED, EXIT_ENGINE = 0, 2, 3, 4
CURVE_HEADER = ["control_param", "sigma", "mean_concurrence", "std_error", "ess", "n_samples"]
GRID_HEADER = ["control_param", "sigma", "label"]
ORACLE_TOL = {"correlator": 1e-9, "ln_z": 1e-9, "concurrence": 1e-8}


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any float64."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class Writer:
    """Collects output files in memory so hashes and bytes are stable."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.hashes: dict[str, str] = {}

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
        self._write(name, buf.getvalue())

    def _write(self, name: str, text: str):
        data = text.encode("utf-8")
        (self.out_dir / name).write_bytes(data)
        self.hashes[name] = hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# curves


def _averagings(cfg: RunConfig):
    if cfg.averaging is Averaging.BOTH:
        return [Averaging.ANNEALED, Averaging.QUENCHED]
    return [cfg.averaging]


def curve_rows(cfg: RunConfig, sigma: float, averaging: Averaging, workers: int, refuse: bool = True):
    """Rows (x, sigma, C, SE, ESS, n) along the control grid."""
    template = cfg.template()
    disorder = cfg.disorder(1.0, sigma)
    xs = cfg.control
    if averaging is Averaging.QUENCHED:
        ests = quenched_curve(template, disorder, xs, cfg.n_samples, None, cfg.bond_policy, cfg.master_seed, workers)
        return [(x, sigma, e.mean, e.std_error, e.ess, e.n_samples) for x, e in zip(xs, ests)]
    curve = annealed_concurrence_curve(
        template, disorder, xs, cfg.n_samples, None, cfg.bond_policy, cfg.master_seed, workers,
        cfg.annealed_method, spline=len(xs) >= 4, refuse=refuse,
    )
    rows = []
    for k, x in enumerate(xs):
        c = np.nan if curve.refused[k] else curve.concurrence[k]
        rows.append((x, sigma, c, curve.std_error[k], curve.ess[k], cfg.n_samples))
    return rows


def homogeneous_rows(cfg: RunConfig):
    """The delta-disorder curve, identical to a quenched sweep at sigma = 0."""
    return curve_rows(cfg, 0.0, Averaging.QUENCHED, 1)


def _curve_of(rows) -> Curve:
    xs = np.array([r[0] for r in rows])
    ys = np.clip(np.array([r[2] for r in rows]), 0, None)
    return Curve(xs, ys, {"sigma": rows[0][1]})


def _summary(rows):
    ess = np.array([r[4] for r in rows], dtype=float)
    se = np.array([r[3] for r in rows], dtype=float)
    return {
        "points": len(rows),
        "min_ess": float(np.nanmin(ess)) if len(ess) else None,
        "low_ess_points": int(np.sum(ess < 100)),
        "max_std_error": float(np.nanmax(se)) if len(se) else None,
    }


# ---------------------------------------------------------------------------
# modes


def run_homogeneous(cfg, workers, out: Writer, results):
    rows = homogeneous_rows(cfg)
    out.csv("curve_homogeneous.csv", CURVE_HEADER, rows)
    results["estimates"]["curve_homogeneous.csv"] = _summary(rows)


def run_sweep(cfg, workers, out: Writer, results):
    for avg in _averagings(cfg):
        rows = []
        for s in cfg.sigmas:
            rows += curve_rows(cfg, float(s), avg, workers)
        name = f"curve_{avg.value}.csv"
        out.csv(name, CURVE_HEADER, rows)
        results["estimates"][name] = _summary(rows)


def run_phase_grid(cfg, workers, out: Writer, results):
    baseline = None
    if cfg.grid_mode is GridMode.NORMAL_ENHANCED:
        base_rows = homogeneous_rows(cfg)
        baseline = np.array([r[2] for r in base_rows])
        out.csv("curve_homogeneous.csv", CURVE_HEADER, base_rows)
    unknown = []
    for avg in _averagings(cfg):
        rows, grid_rows = [], []
        for s in cfg.sigmas:
            try:
                r = curve_rows(cfg, float(s), avg, workers, refuse=False)
            except (EngineError, NonPhysicalState) as exc:
                log.warning("sigma = %s: %s; row left Unknown", s, exc)
                r = [(x, float(s), np.nan, np.nan, np.nan, cfg.n_samples) for x in cfg.control]
            rows += r
            labels = label_nodes(cfg.grid_mode, [v[2] for v in r], baseline, cfg.tolerance)
            for v, lab in zip(r, labels):
                grid_rows.append((v[0], v[1], lab.value))
                if lab is Label.UNKNOWN:
                    unknown.append({"averaging": avg.value, "control_param": v[0], "sigma": v[1]})
        out.csv(f"curve_{avg.value}.csv", CURVE_HEADER, rows)
        out.csv(f"grid_{avg.value}.csv", GRID_HEADER, grid_rows)
        results["estimates"][f"curve_{avg.value}.csv"] = _summary(rows)
    results["unknown_nodes"] = unknown


def run_qpt_shift(cfg, workers, out: Writer, results):
    for avg in _averagings(cfg):
        rows, qpt = [], []
        for s in cfg.sigmas:
            r = curve_rows(cfg, float(s), avg, workers)
            rows += r
            m = derivative_min(_curve_of(r))
            if isinstance(m, DerivativeMinimum):
                qpt.append((float(s), m.x_min, m.value, m.prominence, m.width, "minimum"))
            else:
                qpt.append((float(s), np.nan, np.nan, m.prominence, m.width, "no_prominent_minimum"))
        out.csv(f"curve_{avg.value}.csv", CURVE_HEADER, rows)
        out.csv(
            f"qpt_shift_{avg.value}.csv",
            ["sigma", "x_min", "derivative_min", "prominence", "width", "status"],
            qpt,
        )
        results["estimates"][f"curve_{avg.value}.csv"] = _summary(rows)


def run_sigma_c(cfg, workers, out: Writer, results):
    avg = Averaging.ANNEALED if cfg.averaging is Averaging.BOTH else cfg.averaging
    sc = cfg.sigma_c
    curves = {}

    def count_at(s):
        rows = curve_rows(cfg, float(s), avg, workers)
        curves[float(s)] = rows
        return classify_segments(_curve_of(rows), cfg.tolerance).count

    res = find_sigma_c(count_at, sc["sigma_lo"], sc["sigma_hi"], tol=sc.get("resolution", 0.02))
    out.csv("sigma_c_probes.csv", ["sigma", "segment_count"], res.probes)
    all_rows = [r for s in sorted(curves) for r in curves[s]]
    out.csv(f"curve_{avg.value}.csv", CURVE_HEADER, all_rows)
    results["estimates"][f"curve_{avg.value}.csv"] = _summary(all_rows)
    results["sigma_c"] = {"value": res.sigma_c, "half_width": res.half_width, "averaging": avg.value}


def run_oracle_check(cfg, workers, out: Writer, results):
    oc = cfg.oracle
    sizes = oc.get("sizes", list(range(2, 9)))
    gammas = oc.get("gammas", [0.3, 0.5, 1.0])
    betas = oc.get("betas", [1.0, 5.0, 20.0])
    n_inst = oc.get("n_instances", 5)
    rows, worst = [], {"correlator": 0.0, "ln_z": 0.0, "concurrence": 0.0}
    k = 0
    for n in sizes:
        for g in gammas:
            for b in betas:
                for inst in range(n_inst):
                    z = derive_substream(cfg.master_seed, k).generator().standard_normal(2 * n)
                    k += 1
                    chain = ChainSpec(n, g, 1.0 + z[:n], 1.0 + z[n:], b, cfg.boundary)
                    c = compare_with_engine(chain)
                    rows.append((n, g, b, inst, c.correlator_error, c.ln_z_relative_error, c.concurrence_error))
                    worst["correlator"] = max(worst["correlator"], c.correlator_error)
                    worst["ln_z"] = max(worst["ln_z"], c.ln_z_relative_error)
                    worst["concurrence"] = max(worst["concurrence"], c.concurrence_error)
    out.csv(
        "oracle_check.csv",
        ["n_sites", "gamma", "beta", "instance", "correlator_error", "ln_z_relative_error", "concurrence_error"],
        rows,
    )
    passed = all(worst[key] <= ORACLE_TOL[key] for key in worst)
    results["oracle"] = {"worst": worst, "tolerances": ORACLE_TOL, "passed": passed,
                         "exact_channel": cfg.boundary.value == "open"}
    if not passed and cfg.boundary.value == "open":
        raise EngineError("engine disagrees with exact diagonalisation", worst)


MODES = {
    Mode.HOMOGENEOUS: run_homogeneous,
    Mode.SWEEP: run_sweep,
    Mode.PHASE_GRID: run_phase_grid,
    Mode.QPT_SHIFT: run_qpt_shift,
    Mode.SIGMA_C: run_sigma_c,
    Mode.ORACLE_CHECK: run_oracle_check,
}


def run(cfg: RunConfig, out_dir, workers: int | None = None) -> int:
    """Execute one configured run; returns the process exit code."""
    workers = default_workers() if workers is None else workers
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = Writer(out_dir)
    results = {"estimates": {}}
    t0 = time.perf_counter()
    code, error = EXIT_OK, None
    try:
        MODES[cfg.mode](cfg, workers, out, results)
    except (EstimateRefused, NonPhysicalState, NonMonotoneTransition) as exc:
        code, error = EXIT_REFUSED, str(exc)
    except EngineError as exc:
        code, error = EXIT_ENGINE, str(exc)
    manifest = {
        "config": cfg.raw,
        "mode": cfg.mode.value,
        "master_seed": cfg.master_seed,
        "version": __version__,
        "workers": workers,
        "warnings": list(cfg.warnings),
        "results": results,
        "status": code,
        "error": error,
        "wall_clock_seconds": time.perf_counter() - t0,
        "outputs": dict(sorted(out.hashes.items())),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n")
    if error:
        log.error("%s", error)
    return code


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _mode_arg(text: str) -> Mode:
    key = text.strip().lower().replace("-", "_")
    aliases = {"phasegrid": "phase_grid", "qptshift": "qpt_shift", "sigmac": "sigma_c", "oraclecheck": "oracle_check"}
    key = aliases.get(key, key)
    try:
        return Mode(key)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown mode {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xy-disorder", description=__doc__.splitlines()[0])
    p.add_argument("mode", type=_mode_arg, help="|".join(m.value for m in Mode))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None, help="defaults to output_dir from the config")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="overrides master_seed from the config")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    try:
        doc = json.loads(text)
        if isinstance(doc, dict):
            if "mode" in doc and _mode_arg(str(doc["mode"])) is not args.mode:
                raise ConfigError([f"$.mode: config says {doc['mode']!r} but the command line says {args.mode.value!r}"])
            doc["mode"] = args.mode.value
            if args.seed is not None:
                doc["master_seed"] = args.seed
            text = json.dumps(doc)
        cfg = validate_config(text)
    except (ConfigError, argparse.ArgumentTypeError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        log.error("config is not valid JSON: %s", exc)
        return EXIT_CONFIG
    if args.workers is not None and args.workers < 1:
        log.error("--workers must be >= 1")
        return EXIT_CONFIG
    out = args.out or cfg.output_dir
    if out is None:
        log.error("no output directory: pass --out or set output_dir")
        return EXIT_CONFIG
    for w in cfg.warnings:
        log.warning("%s", w)
    return run(cfg, out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
