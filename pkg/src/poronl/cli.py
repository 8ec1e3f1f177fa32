"""Experiment runner: single runs, refinement studies and CN/BE comparisons.

Configuration files are INI files::

    [run]
    example = ex41          ; ex41 | ex42 | zero
    scheme = cn             ; cn | be
    n_list = 8, 16, 32      ; or n = 8
    tau = 1e-3              ; or tau_list = 1/2, 1/4, 1/8
    T_final = 1
    output_dir = out
    emit_plots = true

    [quadrature]
    assembly = 5
    error = 7

    [params]
    E = 1e7
"""
from __future__ import annotations

import argparse
import configparser
import io
import sys
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import ERROR_KEYS, ConvergenceTable, ErrorRecord, tables_from_records, write_csv
from .driver import RunResult, run_simulation
from .errors import ConfigError, DivergenceError, PoronlError, SolverError
from .fe_basis import MAX_QUADRATURE_DEGREE
from .mms import EXAMPLES, make_example
from .scheme import DIAGNOSTIC_COLUMNS, HISTORY_RULES, SchemeConfig

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DIVERGENCE = 0, 2, 3, 4

_PARAM_KEYS = {"E", "nu", "alpha", "c0", "lambda_star", "K", "mu_f"}


@dataclass(frozen=True)
class RunConfig:
    example: str = "ex41"
    scheme: str = "cn"
    n: int | None = None
    n_list: tuple[int, ...] | None = None
    tau: float | None = None
    tau_list: tuple[float, ...] | None = None
    T_final: float = 1.0
    output_dir: Path = Path("out")
    emit_plots: bool = False
    quad_assembly: int = 5
    quad_error: int = 7
    history_rule: str = "exponential"
    xi_dirichlet: bool = False
    diagnostics: bool = False
    snapshots: bool = False
    params: dict = field(default_factory=dict)
    source: str = ""  # echo of the parsed configuration

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ConfigError(f"unknown example {self.example!r}; choose from {sorted(EXAMPLES)}")
        if self.scheme not in ("cn", "be"):
            raise ConfigError(f"scheme must be 'cn' or 'be', got {self.scheme!r}")
        if (self.n is None) == (self.n_list is None):
            raise ConfigError("give exactly one of n, n_list")
        if (self.tau is None) == (self.tau_list is None):
            raise ConfigError("give exactly one of tau, tau_list")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be positive")
        if self.n_list is not None:
            if any(k < 1 for k in self.n_list) or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
                raise ConfigError("n_list must be positive and strictly increasing (h decreasing)")
        if self.tau_list is not None:
            if any(t <= 0 for t in self.tau_list) or any(b >= a for a, b in zip(self.tau_list, self.tau_list[1:])):
                raise ConfigError("tau_list must be positive and strictly decreasing")
        for q in (self.quad_assembly, self.quad_error):
            if not 1 <= q <= MAX_QUADRATURE_DEGREE:
                raise ConfigError(f"quadrature degree {q} outside 1..{MAX_QUADRATURE_DEGREE}")
        if self.history_rule not in HISTORY_RULES:
            raise ConfigError(f"history_rule must be one of {HISTORY_RULES}")
        unknown = set(self.params) - _PARAM_KEYS
        if unknown:
            raise ConfigError(f"unknown parameter overrides {sorted(unknown)}")
        # validates the step count of every tau before any solve
        for tau in self.taus:
            SchemeConfig(tau, self.T_final, self.scheme, history_rule=self.history_rule)

    @property
    def ns(self) -> tuple[int, ...]:
        return self.n_list if self.n_list is not None else (self.n,)

    @property
    def taus(self) -> tuple[float, ...]:
        return self.tau_list if self.tau_list is not None else (self.tau,)

    def scheme_config(self, tau: float, scheme: str | None = None) -> SchemeConfig:
        return SchemeConfig(tau, self.T_final, scheme or self.scheme, self.diagnostics, self.history_rule)

    def echo(self) -> list[str]:
        return [line for line in self.source.strip().splitlines() if line.strip()]


def _num(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError as exc:
        raise ConfigError(f"not an integer: {text!r}") from exc


def _list(text: str, conv) -> tuple:
    items = [t for t in text.replace(";", ",").split(",") if t.strip()]
    if not items:
        raise ConfigError("empty list")
    return tuple(conv(t) for t in items)


def parse_config(text: str, **overrides) -> RunConfig:
    """Build a RunConfig from INI text; keyword overrides win."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    run = cp["run"] if cp.has_section("run") else {}
    kw: dict = {}
    known = {"example", "scheme", "n", "n_list", "tau", "tau_list", "T_final", "output_dir",
             "emit_plots", "history_rule", "xi_dirichlet", "diagnostics", "snapshots"}
    unknown = set(run) - known
    if unknown:
        raise ConfigError(f"unknown keys in [run]: {sorted(unknown)}")

    def flag(key):
        try:
            return cp.getboolean("run", key)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc

    for key in ("example", "scheme", "history_rule"):
        if key in run:
            kw[key] = run[key].strip()
    if "n" in run:
        kw["n"] = _int(run["n"])
    if "n_list" in run:
        kw["n_list"] = _list(run["n_list"], _int)
    if "tau" in run:
        kw["tau"] = _num(run["tau"])
    if "tau_list" in run:
        kw["tau_list"] = _list(run["tau_list"], _num)
    if "T_final" in run:
        kw["T_final"] = _num(run["T_final"])
    if "output_dir" in run:
        kw["output_dir"] = Path(run["output_dir"].strip())
    for key in ("emit_plots", "xi_dirichlet", "diagnostics", "snapshots"):
        if key in run:
            kw[key] = flag(key)
    if cp.has_section("quadrature"):
        q = cp["quadrature"]
        if "assembly" in q:
            kw["quad_assembly"] = _int(q["assembly"])
        if "error" in q:
            kw["quad_error"] = _int(q["error"])
    if cp.has_section("params"):
        kw["params"] = {k: _num(v) for k, v in cp["params"].items()}
    if "T_final" not in kw and kw.get("example", "ex41") == "ex42":
        kw["T_final"] = 2.0
    kw.update({k: v for k, v in overrides.items() if v is not None})
    kw["source"] = text
    return RunConfig(**kw)


def load_config(path: str | Path, **overrides) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)


# --- runs and studies --------------------------------------------------------

@dataclass(eq=False)
class StudyResult:
    kind: str  # "single", "spatial", "temporal"
    scheme: str
    tables: dict[str, ConvergenceTable]
    records: list[ErrorRecord]
    wall_times: list[float]
    config: RunConfig
    runs: list[RunResult] = field(default_factory=list)

    @property
    def variable(self) -> str:
        return "tau" if self.kind == "temporal" else "h"


def _header(cfg: RunConfig, extra: Sequence[str] = ()) -> list[str]:
    return ["config:"] + [f"  {line}" for line in cfg.echo()] + list(extra)


def _run(cfg: RunConfig, n: int, tau: float, scheme: str | None = None, diagnostics=None) -> RunResult:
    exact = make_example(cfg.example, cfg.params or None)
    return run_simulation(exact, n, cfg.scheme_config(tau, scheme), quad_degree=cfg.quad_assembly,
                          error_degree=cfg.quad_error, xi_dirichlet=cfg.xi_dirichlet,
                          diagnostics=diagnostics)


def run_single(cfg: RunConfig, scheme: str | None = None) -> StudyResult:
    """One run at (n, tau); writes the diagnostics CSV when enabled."""
    if len(cfg.ns) != 1 or len(cfg.taus) != 1:
        raise ConfigError("run_single needs a single n and a single tau")
    n, tau = cfg.ns[0], cfg.taus[0]
    buf = io.StringIO() if cfg.diagnostics else None
    res = _run(cfg, n, tau, scheme, buf)
    if buf is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"diagnostics_{scheme or cfg.scheme}_n{n}.csv", "w") as fh:
            for line in _header(cfg):
                fh.write(f"# {line}\n")
            fh.write(buf.getvalue())
    return StudyResult("single", scheme or cfg.scheme, tables_from_records([res.record]),
                       [res.record], [res.wall_time], cfg, [res])


def run_spatial_study(cfg: RunConfig, scheme: str | None = None) -> StudyResult:
    if cfg.n_list is None or len(cfg.n_list) < 2:
        raise ConfigError("spatial study needs n_list with at least two entries")
    if len(cfg.taus) != 1:
        raise ConfigError("spatial study needs a single tau")
    runs = [_run(cfg, n, cfg.taus[0], scheme) for n in cfg.n_list]
    recs = [r.record for r in runs]
    return StudyResult("spatial", scheme or cfg.scheme, tables_from_records(recs, "h"), recs,
                       [r.wall_time for r in runs], cfg, runs)


def run_temporal_study(cfg: RunConfig, scheme: str | None = None) -> StudyResult:
    if cfg.tau_list is None or len(cfg.tau_list) < 2:
        raise ConfigError("temporal study needs tau_list with at least two entries")
    if len(cfg.ns) != 1:
        raise ConfigError("temporal study needs a single n")
    runs = [_run(cfg, cfg.ns[0], tau, scheme) for tau in cfg.tau_list]
    recs = [r.record for r in runs]
    return StudyResult("temporal", scheme or cfg.scheme, tables_from_records(recs, "tau"), recs,
                       [r.wall_time for r in runs], cfg, runs)


def run_scheme_comparison(cfg: RunConfig) -> tuple[StudyResult, StudyResult]:
    """The same spatial study with Crank-Nicolson and backward Euler."""
    if cfg.example != "ex42":
        raise ConfigError("the scheme comparison is defined for example ex42")
    return run_spatial_study(cfg, "cn"), run_spatial_study(cfg, "be")


# --- output --------------------------------------------------------------------

def study_csv(result: StudyResult) -> str:
    buf = io.StringIO()
    write_csv([result.tables[k] for k in ERROR_KEYS], buf,
              _header(result.config, [f"study: {result.kind}", f"scheme: {result.scheme}"]))
    return buf.getvalue()


def comparison_csv(cn: StudyResult, be: StudyResult) -> str:
    buf = io.StringIO()
    for line in _header(cn.config, ["study: cn-vs-be"]):
        buf.write(f"# {line}\n")
    buf.write("h,tau,field,norm,cn_error,cn_order,be_error,be_order\n")

    def fmt(v):
        return "n/a" if v is None else f"{v:.6e}"

    for k in ERROR_KEYS:
        a, b = cn.tables[k], be.tables[k]
        for row_a, row_b in zip(a.rows(), b.rows()):
            h, tau, fld, norm, ea, oa = row_a
            eb, ob = row_b[4], row_b[5]
            buf.write(f"{h:.6e},{tau:.6e},{fld},{norm},{fmt(ea)},{fmt(oa)},{fmt(eb)},{fmt(ob)}\n")
    return buf.getvalue()


def write_study(result: StudyResult, output_dir: Path, name: str) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / f"{name}.csv"
    path.write_text(study_csv(result))
    return path


_PLOT_TEMPLATE = """\
# {title}
set datafile separator ","
set logscale xy
set key left top
set xlabel "{xlabel}"
set ylabel "error"
set terminal pngcairo size 800,600
set output "{png}"
{guides}
plot \\
{series}
"""


def emit_plot_script(result: StudyResult, output_dir: Path, csv_name: str | None = None) -> list[Path]:
    """Write a gnuplot script plotting error against h (or tau) from the study CSV.

    Slope guides at rates 1, 2, 3 are anchored at the coarsest level.  When
    the study holds a run with snapshots enabled, grid files (x, y, value) of
    the P1-sampled final fields are written as well.
    """
    if not result.records or not any(t.errors for t in result.tables.values()):
        raise ValueError("empty study result")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    stem = csv_name or f"{result.kind}_{result.scheme}"
    var = result.variable
    col = 1 if var == "h" else 2
    steps = [r.h for r in result.records] if var == "h" else [r.tau for r in result.records]
    x0 = steps[0]
    e0 = max(t.errors[0] for t in result.tables.values())
    guides = "\n".join(f"g{k}(x) = {e0:.6e} * (x / {x0:.6e})**{k}" for k in (1, 2, 3))
    series = []
    for i, key in enumerate(ERROR_KEYS):
        fld, norm = key.split("_")
        series.append(
            f'  "{stem}.csv" using (stringcolumn(3) eq "{fld}" && stringcolumn(4) eq "{norm}" ? '
            f'${col} : 1/0):5 with linespoints title "{fld} {norm}"'
        )
    series += [f'  g{k}(x) with lines dashtype 2 title "rate {k}"' for k in (1, 2, 3)]
    script = _PLOT_TEMPLATE.format(
        title=f"{result.kind} study, scheme {result.scheme}; data {stem}.csv",
        xlabel="h" if var == "h" else "tau", png=f"{stem}.png", guides=guides,
        series=", \\\n".join(series),
    )
    paths = [output_dir / f"{stem}.gp"]
    paths[0].write_text(script)
    if result.config.snapshots and result.runs:
        paths += write_snapshots(result.runs[-1], output_dir, stem)
    return paths


def write_snapshots(run: RunResult, output_dir: Path, stem: str) -> list[Path]:
    """Final-time u_1, u_2, p at the mesh vertices, one (x, y, value) row per vertex."""
    mesh, state, lay = run.mesh, run.state, run.layout
    nv = mesh.n_vertices
    fields = {"u1": state.u[:nv], "u2": state.u[lay.n_p2:lay.n_p2 + nv], "p": state.p}
    paths = []
    for name, vals in fields.items():
        path = Path(output_dir) / f"{stem}_snapshot_{name}.dat"
        with open(path, "w") as fh:
            fh.write(f"# {name} at t = {state.t:.6g}; columns x y value\n")
            np.savetxt(fh, np.column_stack([mesh.vertices, vals]), fmt="%.10e")
        paths.append(path)
    return paths


def _summary(result: StudyResult) -> str:
    lines = [f"{result.kind} study ({result.scheme}):"]
    for k in ERROR_KEYS:
        tab = result.tables[k]
        cells = [f"{e:.4e}" + ("" if o is None else f" ({o:.3f})") for e, o in zip(tab.errors, tab.orders)]
        lines.append(f"  {k:5s} " + "  ".join(cells))
    return "\n".join(lines)


# --- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="poronl", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in [("run", "single simulation"), ("spatial", "spatial refinement study"),
                           ("temporal", "temporal refinement study"),
                           ("compare", "Crank-Nicolson vs backward Euler spatial study")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker count; runs are executed sequentially, so values > 1 only log a note")
        p.add_argument("--quad", type=int, help="assembly quadrature exactness degree")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, output_dir=Path(args.out) if args.out else None,
                          quad_assembly=args.quad)
        if args.threads and args.threads > 1:
            print("note: runs execute sequentially; --threads is accepted but not used", file=sys.stderr)
        out = Path(cfg.output_dir)
        if args.command == "run":
            res = run_single(cfg)
            path = write_study(res, out, f"run_{res.scheme}")
            results = [(res, path)]
        elif args.command == "spatial":
            res = run_spatial_study(cfg)
            results = [(res, write_study(res, out, f"spatial_{res.scheme}"))]
        elif args.command == "temporal":
            res = run_temporal_study(cfg)
            results = [(res, write_study(res, out, f"temporal_{res.scheme}"))]
        else:
            cn, be = run_scheme_comparison(cfg)
            results = [(cn, write_study(cn, out, "spatial_cn")), (be, write_study(be, out, "spatial_be"))]
            out.mkdir(parents=True, exist_ok=True)
            (out / "compare.csv").write_text(comparison_csv(cn, be))
        for res, path in results:
            print(_summary(res))
            print(f"  wrote {path}")
            if cfg.emit_plots and res.kind != "single":
                for p in emit_plot_script(res, out, path.stem):
                    print(f"  wrote {p}")
            elif cfg.snapshots:
                for p in write_snapshots(res.runs[-1], out, path.stem):
                    print(f"  wrote {p}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PoronlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK
