"""Config-driven runs: ``deepnurbs run|validate|compare``.

Run configs are INI files with three sections::

    [problem]
    name = slit_square          ; or unit_square, quarter_annulus, square_with_hole, custom
    radial_basis = 6            ; optional problem-specific knobs

    [solver]
    mode = deep_nurbs
    hidden_layers = 2
    epochs = 2000

    [output]
    directory = runs/slit
    grid_resolution = 101
    dump_samples = false

A ``custom`` problem takes its control net from a ``[geometry]`` section in
the format of :mod:`deepnurbs.serialization`.  Every key is checked: typos
are errors, not silently ignored settings.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import dataclasses
import inspect
import json
import logging
import math
import os
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .admissible import validate_admissibility
from .errors import (
    ConfigParseError,
    ConfigValidationError,
    ConsistencyCheckFailed,
    DeepNurbsError,
    IncompleteRun,
    NonFiniteGradient,
    OracleError,
)
from .problems import (
    PROBLEMS,
    ManufacturedReference,
    ProblemSpec,
    _interior_check_points,
    custom_problem,
    get_problem,
    manufactured_pair,
)
from .sampler import draw_batch, write_batch_csv
from .serialization import (
    atomic_write,
    checkpoint_text,
    csv_text,
    is_net_key,
    net_from_items,
    net_to_items,
)
from .solver import HistoryRow, SolverConfig, compute_metrics, make_eval_grid, predict, train

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}
OUTPUT_KEYS = ("directory", "grid_resolution", "dump_samples")
CUSTOM_KEYS = ("dirichlet_edges", "source", "interior_fill", "phi_seed", "seam_axis")
HISTORY_COLUMNS = ("epoch", "loss", "mse", "rel_l2", "l_inf")


@dataclass(frozen=True)
class RunConfig:
    problem: str
    solver: SolverConfig = field(default_factory=SolverConfig)
    problem_options: dict = field(default_factory=dict)
    geometry: dict | None = None
    output_dir: str = "run"
    grid_resolution: int = 101
    dump_samples: bool = False

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ConfigValidationError("grid_resolution", "must be at least 2")
        if self.problem == "custom" and self.geometry is None:
            raise ConfigValidationError("geometry", "a custom problem needs a [geometry] section")
        if self.problem != "custom" and self.geometry is not None:
            raise ConfigValidationError("geometry", "only a custom problem takes a [geometry] section")


# --------------------------------------------------------------------------
# parsing


def _problem_keys(name: str) -> dict[str, str]:
    """Config key -> factory keyword for a named problem."""
    if name == "custom":
        return {k: k for k in CUSTOM_KEYS}
    params = inspect.signature(PROBLEMS[name]).parameters
    return {("phi_seed" if p == "seed" else p): p for p in params}


def _convert(value: str, kind, key: str):
    try:
        if kind is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind is int:
            return int(value)
        if kind is float:
            out = float(value)
            if not math.isfinite(out):
                raise ValueError(f"not finite: {value!r}")
            return out
        return value.strip()
    except ValueError as exc:
        raise ConfigValidationError(key, str(exc)) from None


def _solver_kind(name: str):
    default = SOLVER_FIELDS[name].default
    return str if default is None else type(default)


def _problem_value(key: str, value: str):
    if key == "interior_fill":
        return "random" if value.strip() == "random" else _convert(value, float, key)
    if key in ("phi_seed", "radial_basis", "num_basis", "degree", "seam_axis"):
        return _convert(value, int, key)
    if key in ("fd_h", "source"):
        return _convert(value, float, key)
    if key == "dirichlet_edges":
        return tuple(value.split())
    return value.strip()


def _read_ini(text: str, source: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("expected a [section] header", exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigParseError(exc.message.split(": ", 1)[-1], exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigParseError(f"expected 'key = value', got {ast.literal_eval(line).strip()!r}", lineno) from None
    return cp


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    cp = _read_ini(text, source)
    for sec in cp.sections():
        if sec not in ("problem", "solver", "output", "geometry"):
            raise ConfigValidationError(f"[{sec}]", "unknown section")
    if not cp.has_section("problem") or "name" not in cp["problem"]:
        raise ConfigValidationError("name", "[problem] must name a problem")
    name = cp["problem"]["name"].strip()
    if name != "custom" and name not in PROBLEMS:
        raise ConfigValidationError("name", f"unknown problem {name!r}; choose from {sorted(PROBLEMS)} or custom")

    allowed = _problem_keys(name)
    options = {}
    for key, value in cp["problem"].items():
        if key == "name":
            continue
        if key not in allowed:
            raise ConfigValidationError(key, f"unknown key in [problem] for {name}")
        options[key] = _problem_value(key, value)

    solver_kw: dict[str, Any] = {}
    if cp.has_section("solver"):
        for key, value in cp["solver"].items():
            if key not in SOLVER_FIELDS:
                raise ConfigValidationError(key, "unknown key in [solver]")
            solver_kw[key] = _convert(value, _solver_kind(key), key)
    solver = SolverConfig(**solver_kw)

    out_kw: dict[str, Any] = {}
    if cp.has_section("output"):
        kinds = {"directory": str, "grid_resolution": int, "dump_samples": bool}
        for key, value in cp["output"].items():
            if key not in OUTPUT_KEYS:
                raise ConfigValidationError(key, "unknown key in [output]")
            out_kw["output_dir" if key == "directory" else key] = _convert(value, kinds[key], key)

    geometry = None
    if cp.has_section("geometry"):
        geometry = dict(cp["geometry"].items())
        for key in geometry:
            if not is_net_key(key):
                raise ConfigValidationError(key, "unknown key in [geometry]")
        try:
            net_from_items(geometry)
        except (ValueError, DeepNurbsError) as exc:
            key, _, msg = str(exc).partition(": ")
            raise ConfigValidationError(key if msg else "geometry", msg or str(exc)) from None
    return RunConfig(name, solver, options, geometry, **out_kw)


def parse_config(path) -> RunConfig:
    """Read and fully validate a run config; all defaults are applied."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def _ini_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(v)
    return str(v)


def config_to_ini(config: RunConfig) -> str:
    """INI text that :func:`parse_config_text` maps back to an equal config."""
    lines = ["[problem]", f"name = {config.problem}"]
    lines += [f"{k} = {_ini_value(v)}" for k, v in config.problem_options.items()]
    lines += ["", "[solver]"]
    lines += [f"{k} = {_ini_value(getattr(config.solver, k))}" for k in SOLVER_FIELDS]
    lines += ["", "[output]", f"directory = {config.output_dir}",
              f"grid_resolution = {config.grid_resolution}",
              f"dump_samples = {_ini_value(config.dump_samples)}"]
    if config.geometry is not None:
        lines += ["", "[geometry]"] + [f"{k} = {v}" for k, v in config.geometry.items()]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# running


def build_problem(config: RunConfig) -> ProblemSpec:
    if config.problem == "custom":
        net, coeffs = net_from_items(config.geometry)
        kw = {("seed" if k == "phi_seed" else k): v for k, v in config.problem_options.items()}
        return custom_problem(net, coefficients=coeffs, **kw)
    keys = _problem_keys(config.problem)
    return get_problem(config.problem, **{keys[k]: v for k, v in config.problem_options.items()})


def _versions() -> dict:
    import scipy

    return {"deepnurbs": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _metadata(config: RunConfig, status: str, artifacts: list[str], error: str | None) -> str:
    record = {
        "status": status,
        "incomplete": status != "complete",
        "error": error,
        "problem": config.problem,
        "mode": config.solver.mode,
        "seeds": {"run": config.solver.seed, "batch": "run + epoch",
                  "phi": config.problem_options.get("phi_seed")},
        "deep_ritz_penalty": config.solver.penalty,
        "config": {
            "problem": {"name": config.problem, **{k: _ini_value(v) for k, v in config.problem_options.items()}},
            "solver": dataclasses.asdict(config.solver),
            "output": {"directory": config.output_dir, "grid_resolution": config.grid_resolution,
                       "dump_samples": config.dump_samples},
        },
        "versions": _versions(),
        "artifacts": artifacts,
    }
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def _json_float(x: float):
    return None if math.isnan(x) else x


def history_csv(history: Sequence[HistoryRow]) -> str:
    return csv_text(HISTORY_COLUMNS, [(h.epoch, h.loss, h.mse, h.rel_l2, h.l_inf) for h in history])


def run_experiment(config: RunConfig) -> int:
    """Train, write every artifact, and return a process exit status.

    ``metadata.json`` is written first with status ``running`` and
    rewritten at the end, so an interrupted or failed run stays flagged
    as incomplete.
    """
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: output directory {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    if not os.access(out, os.W_OK):
        print(f"error: output directory {out} is not writable", file=sys.stderr)
        return EXIT_USAGE

    artifacts: list[str] = []

    def put(name: str, text: str):
        atomic_write(out / name, text)
        if name not in artifacts:
            artifacts.append(name)

    put("config_echo.ini", config_to_ini(config))
    atomic_write(out / "metadata.json", _metadata(config, "running", artifacts, None))

    history: list[HistoryRow] = []
    try:
        problem = build_problem(config)
        put("geometry.ini", "[geometry]\n" + "".join(
            f"{k} = {v}\n" for k, v in net_to_items(problem.geometry, problem.phi.coefficients).items()))
        if config.dump_samples:
            batch = draw_batch(problem.geometry, config.solver.batch_size, config.solver.seed + 1)
            write_batch_csv(batch, out / "samples.csv")
            artifacts.append("samples.csv")
        result = train(config.solver, problem, callback=history.append)
    except (NonFiniteGradient, OracleError, ConsistencyCheckFailed, ValueError, ArithmeticError) as exc:
        if history:
            put("history.csv", history_csv(history))
        kind = type(exc).__name__
        atomic_write(out / "metadata.json", _metadata(config, "failed", artifacts, f"{kind}: {exc}"))
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return EXIT_FAILED

    put("history.csv", history_csv(result.history))
    put("checkpoint.txt", checkpoint_text(result.params, config.solver.seed))

    grid = make_eval_grid(problem, config.grid_resolution)
    u = predict(result.params, grid, config.solver.mode)
    if grid.reference is not None:
        m = compute_metrics(u, grid.reference)
        metrics = {k: _json_float(v) for k, v in m.as_dict().items()}
        rows = [(x[0], x[1], p, r, abs(p - r)) for x, p, r in zip(grid.x, u, grid.reference)]
        put("solution_grid.csv", csv_text(("x1", "x2", "u_pred", "u_ref", "abs_err"), rows))
        put("reference_grid.csv", csv_text(("x1", "x2", "u_ref"),
                                           [(x[0], x[1], r) for x, r in zip(grid.x, grid.reference)]))
    else:
        metrics = {"mse": None, "rel_l2": None, "l_inf": None}
        put("solution_grid.csv", csv_text(("x1", "x2", "u_pred"),
                                          [(x[0], x[1], p) for x, p in zip(grid.x, u)]))
    metrics.update({"problem": config.problem, "mode": config.solver.mode, "epochs": config.solver.epochs,
                    "final_loss": result.history[-1].loss})
    put("metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    atomic_write(out / "metadata.json", _metadata(config, "complete", artifacts, None))
    return EXIT_OK


# --------------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def validate_problem(problem: ProblemSpec, membership_samples: int = 10_000, seed: int = 0) -> list[CheckResult]:
    """Dry-run checks: admissibility, geometry membership and reference consistency."""
    checks = []
    rep = validate_admissibility(problem.phi)
    checks.append(CheckResult("admissibility", rep.passed, f"max |phi| on Dirichlet edges = {rep.max_boundary_abs:.3e}"))
    if problem.contains is not None:
        batch = draw_batch(problem.geometry, membership_samples, seed)
        inside = problem.contains(batch.x[~batch.skipped], 1e-9)
        bad = int(np.sum(~inside))
        checks.append(CheckResult("membership", bad == 0, f"{bad} of {inside.size} samples outside the domain"))
    ref = problem.reference
    if isinstance(ref, ManufacturedReference):
        try:
            manufactured_pair(ref.u_star, ref.laplacian, _interior_check_points(problem.geometry))
            checks.append(CheckResult("manufactured", True, "closed-form Laplacian matches finite differences"))
        except ConsistencyCheckFailed as exc:
            checks.append(CheckResult("manufactured", False, str(exc)))
    elif ref is not None:
        res = ref.solution.residual
        checks.append(CheckResult("fd_oracle", res < 1e-10, f"linear-system residual {res:.2e}"))
    return checks


# --------------------------------------------------------------------------
# comparison


@dataclass
class Comparison:
    problem: str
    labels: tuple[str, str]
    rows: tuple[dict, dict]
    ratio: dict

    COLUMNS = ("mse", "rel_l2", "l_inf")

    def to_text(self) -> str:
        head = f"{'run':<24}" + "".join(f"{c:>14}" for c in self.COLUMNS)
        lines = [f"problem: {self.problem}", head]
        for label, row in zip(self.labels, self.rows):
            lines.append(f"{label:<24}" + "".join(f"{row[c]:>14.4e}" for c in self.COLUMNS))
        lines.append(f"{'ratio (a/b)':<24}" + "".join(f"{self.ratio[c]:>14.4e}" for c in self.COLUMNS))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = [(label,) + tuple(row[c] for c in self.COLUMNS) for label, row in zip(self.labels, self.rows)]
        rows.append(("ratio",) + tuple(self.ratio[c] for c in self.COLUMNS))
        return csv_text(("run",) + self.COLUMNS, rows)


def _load_run(directory) -> tuple[dict, dict]:
    d = Path(directory)
    try:
        meta = json.loads((d / "metadata.json").read_text())
    except FileNotFoundError:
        raise IncompleteRun(f"{d}: no metadata.json") from None
    if meta.get("incomplete", True):
        raise IncompleteRun(f"{d}: run is flagged incomplete ({meta.get('status')})")
    try:
        metrics = json.loads((d / "metrics.json").read_text())
    except FileNotFoundError:
        raise IncompleteRun(f"{d}: no metrics.json") from None
    if any(metrics.get(c) is None for c in Comparison.COLUMNS):
        raise IncompleteRun(f"{d}: metrics are missing (was there a reference solution?)")
    return meta, metrics


def compare_runs(dir_a, dir_b) -> Comparison:
    """Side-by-side MSE, relative L2 and max error of two finished runs."""
    (meta_a, m_a), (meta_b, m_b) = _load_run(dir_a), _load_run(dir_b)
    if meta_a["problem"] != meta_b["problem"]:
        raise ValueError(f"runs solve different problems: {meta_a['problem']!r} vs {meta_b['problem']!r}")

    def ratio(a, b):
        if b == 0:
            return 1.0 if a == 0 else math.inf
        return a / b

    labels = (f"{meta_a['mode']} ({Path(dir_a).name})", f"{meta_b['mode']} ({Path(dir_b).name})")
    return Comparison(meta_a["problem"], labels, (m_a, m_b),
                      {c: ratio(m_a[c], m_b[c]) for c in Comparison.COLUMNS})


# --------------------------------------------------------------------------
# entry point


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="deepnurbs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="train a model and write artifacts")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="override [output] directory")
    p_val = sub.add_parser("validate", help="check a config and its problem without training")
    p_val.add_argument("config")
    p_cmp = sub.add_parser("compare", help="compare the metrics of two finished runs")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--csv", help="also write the table as CSV to this path")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "compare":
        try:
            report = compare_runs(args.dir_a, args.dir_b)
        except (IncompleteRun, ValueError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILED
        sys.stdout.write(report.to_text())
        if args.csv:
            atomic_write(args.csv, report.to_csv())
        return EXIT_OK

    try:
        config = parse_config(args.config)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "run":
        if args.output:
            config = dataclasses.replace(config, output_dir=args.output)
        return run_experiment(config)

    try:
        problem = build_problem(config)
    except (OracleError, ConsistencyCheckFailed, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    checks = validate_problem(problem)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
