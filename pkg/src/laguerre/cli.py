"""Command-line front end.

    laguerre generate|fit|diagram|report --config run.yaml
             [--rng-seed N] [--threads N] [--output-dir DIR]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
On failure a JSON error record is printed to stderr and, when possible,
written to ``error.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import MODES, RunConfig, load_config
from .diagram import build_diagram
from .errors import (
    ConfigError,
    IdMismatch,
    InfeasibleSpec,
    InvalidTargets,
    LaguerreError,
)
from .io import DiagramExport, atomic_write, dumps, read_points_csv, write_points_csv, write_vtk
from .lloyd import LloydConfig, algorithm2
from .reporting import plot_diagram_2d, plot_trace, report_errors
from .seeding import SpatialSpec, VolumeSpec, make_rng, make_targets, sample_positions
from .transport import TargetSpec, as_targets, solve_weights, sphere_packing_init

log = logging.getLogger("laguerre")

THREADS_ENV = "LAGUERRE_NUM_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def set_threads(n) -> None:
    import numba

    if n is None:
        return
    n = int(n)
    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise ConfigError(f"threads must lie in [1, {numba.config.NUMBA_NUM_THREADS}]")
    numba.set_num_threads(n)


# -- building inputs -------------------------------------------------------

def build_targets(cfg: RunConfig) -> TargetSpec:
    block = dict(cfg.targets)
    if "file" in block:
        table = read_points_csv(cfg.path(block["file"]))
        if table.targets is None:
            raise ConfigError("targets file needs an m column")
        return as_targets(table.targets, cfg.domain)
    if "values" in block:
        block.setdefault("kind", "explicit")
    spec = VolumeSpec(**block)
    return make_targets(cfg.domain, spec, make_rng(cfg.rng_seed))


def build_seeds(cfg: RunConfig, targets: TargetSpec | None):
    """Positions and, if the seeds file has them, weights."""
    block = dict(cfg.seeds)
    if "file" in block:
        table = read_points_csv(cfg.path(block["file"]))
        if table.positions.shape[1] != cfg.domain.dim:
            raise ConfigError("seed file dimension does not match the domain")
        return table.positions, table.weights
    n = len(targets)
    spec = SpatialSpec(rng_seed=cfg.rng_seed + 1, labels=targets.labels,
                       sizes=targets.targets, **block)
    return sample_positions(cfg.domain, n, spec), None


def initial_weights(cfg: RunConfig, targets, file_weights):
    policy = cfg.solver.get("w_init", "zeros")
    if policy == "zeros":
        return None
    if policy == "sphere-packing":
        return sphere_packing_init(targets, cfg.domain.dim)
    if "w_file" in cfg.solver:
        table = read_points_csv(cfg.path(cfg.solver["w_file"]))
        w = table.weights
    else:
        w = file_weights
    if w is None or len(w) != len(targets):
        raise ConfigError("initial weight file needs a w column with one row per seed")
    return w


# -- pipelines -------------------------------------------------------------

def _write_outputs(cfg: RunConfig, out: Path, diagram, targets, run_record: dict,
                   trace=None) -> None:
    export = DiagramExport.from_diagram(diagram, targets)
    formats = cfg.formats
    if "json" in formats:
        export.write(out / "diagram.json")
    if "csv" in formats:
        write_points_csv(out / "generators.csv", diagram.positions, diagram.weights,
                         None if targets is None else targets.targets)
    if "vtk" in formats:
        write_vtk(export, out / "diagram.vtk")
    if targets is not None:
        run_record["errors"] = report_errors(export, targets, out_dir=out, eps=cfg.eps,
                                             figures="png" in formats)
    if "png" in formats:
        if diagram.dim == 2:
            plot_diagram_2d(export, out / "diagram.png",
                            None if targets is None else targets.labels)
        if trace is not None and len(trace.records):
            plot_trace(trace, out / "evaluations.png")
    atomic_write(out / "run_report.json", dumps(run_record))


def run_generate(cfg: RunConfig, out: Path) -> dict:
    targets = build_targets(cfg)
    seeds, _ = build_seeds(cfg, targets)
    lc = LloydConfig(eps=cfg.eps, method=cfg.method,
                     max_iter=cfg.solver.get("max_iter"), **cfg.lloyd)
    x, w, trace = algorithm2(cfg.domain, targets, seeds, lc)
    record = {"mode": "generate", "version": __version__, "trace": trace.to_dict()}
    _write_outputs(cfg, out, trace.diagram, targets, record, trace)
    return record


def run_fit(cfg: RunConfig, out: Path) -> dict:
    targets = build_targets(cfg)
    seeds, file_w = build_seeds(cfg, targets)
    if len(seeds) != len(targets):
        raise IdMismatch("seed and target counts differ")
    w0 = initial_weights(cfg, targets, file_w)
    _, report = solve_weights(cfg.domain, seeds, targets, eps=cfg.eps, w_init=w0,
                              method=cfg.method, max_iter=cfg.solver.get("max_iter"))
    record = {"mode": "fit", "version": __version__, "solve": report.to_dict()}
    _write_outputs(cfg, out, report.diagram, targets, record)
    return record


def run_diagram(cfg: RunConfig, out: Path) -> dict:
    seeds, weights = build_seeds(cfg, None)
    if weights is None:
        raise ConfigError("mode 'diagram' needs seed weights (w column)")
    targets = build_targets(cfg) if cfg.targets else None
    if targets is not None and len(targets) != len(seeds):
        raise IdMismatch("seed and target counts differ")
    diagram = build_diagram(cfg.domain, seeds, weights)
    record = {"mode": "diagram", "version": __version__,
              "total_volume": diagram.total_volume(),
              "empty_cells": np.flatnonzero(diagram.empty).tolist()}
    _write_outputs(cfg, out, diagram, targets, record)
    return record


def run_report(cfg: RunConfig, out: Path) -> dict:
    export = DiagramExport.read(cfg.path(cfg.report["export"]))
    targets = None
    if "targets" in cfg.report:
        targets = read_points_csv(cfg.path(cfg.report["targets"])).targets
        if targets is None:
            raise ConfigError("report.targets file needs an m column")
    reference = None
    if "reference" in cfg.report:
        reference = read_points_csv(cfg.path(cfg.report["reference"])).positions
    domain = cfg.domain if cfg.domain is not None and cfg.domain.periodic else None
    return report_errors(export, targets, reference, out_dir=out, eps=cfg.eps,
                         domain=domain, figures="png" in cfg.formats)


PIPELINES = {"generate": run_generate, "fit": run_fit, "diagram": run_diagram,
             "report": run_report}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, InvalidTargets, InfeasibleSpec, IdMismatch)):
        return EXIT_CONFIG
    if isinstance(exc, LaguerreError):
        return EXIT_SOLVER
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laguerre", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--rng-seed", type=int, help="override rng_seed from the config")
    p.add_argument("--threads", type=int,
                   help=f"worker threads (default: ${THREADS_ENV} or all cores)")
    p.add_argument("--output-dir", help="override output.dir from the config")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.output_dir) if args.output_dir else None
    try:
        set_threads(args.threads if args.threads is not None
                    else os.environ.get(THREADS_ENV))
        cfg = load_config(args.config, args.mode)
        if args.rng_seed is not None:
            cfg.rng_seed = args.rng_seed
        if out is None:
            out = cfg.path(cfg.output.get("dir", "out"))
        out.mkdir(parents=True, exist_ok=True)
        result = PIPELINES[args.mode](cfg, out)
    except (LaguerreError, OSError) as exc:
        code = exit_code(exc)
        record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(json.dumps(record), file=sys.stderr)
        if out is not None:
            try:
                atomic_write(out / "error.json", dumps(record))
            except OSError:
                pass
        return code
    if args.verbose:
        print(dumps(result), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
