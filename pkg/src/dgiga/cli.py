"""Command-line experiment driver.

``dgiga run`` solves one case on a sequence of levels and writes a CSV
convergence table, ``dgiga sweep`` repeats that over several degrees and
``dgiga list`` shows the registry. Options may also come from a flat
``key = value`` file given with ``--config``; flags on the command line
take precedence over the file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .analysis import ConvergenceRecord, LevelResult, convergence_study, field_of, reference_study
from .errors import ConfigError, SolverError, UnknownNameError
from .problems import case_names, get_case
from .vtk import write_vtk

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3
CSV_HEADER = "level,dofs,l2_error,l2_rate,dg_error,dg_rate"
CASE_PARAMS = ("ratio", "lam", "dim", "grading", "contrast", "base")


@dataclass
class RunConfig:
    case: str = ""
    degree: int = 1
    degrees: tuple[int, ...] = ()
    levels: int = 4
    penalty: float | None = None
    grading: float | None = None
    quad: int | None = None
    tol: float = 1e-11
    out: str = "."
    nitsche: bool = True
    vtk: bool = False
    threads: int | None = None
    solver: str = "auto"
    ratio: int | None = None
    lam: float | None = None
    dim: int | None = None
    contrast: float | None = None
    base: int | None = None

    def validate(self) -> None:
        if not self.case:
            raise ConfigError("no case given")
        if self.levels < 1:
            raise ConfigError("levels must be at least 1")
        if self.degree < 1 or any(k < 1 for k in self.degrees):
            raise ConfigError("degree must be at least 1")

    def case_params(self) -> dict:
        return {k: getattr(self, k) for k in CASE_PARAMS if getattr(self, k) is not None}


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "tuple[int, ...]":
        return tuple(int(s) for s in raw.replace(",", " ").split())
    if kind == "str":
        return raw
    conv = int if "int" in kind else float
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def read_config(path: str | Path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def format_csv(records: list[ConvergenceRecord]) -> str:
    def rate(r):
        return "" if r is None else f"{r:.4g}"

    rows = [CSV_HEADER]
    rows += [
        f"{r.level},{r.dofs},{r.l2_error:.6e},{rate(r.l2_rate)},{r.dg_error:.6e},{rate(r.dg_rate)}"
        for r in records
    ]
    return "\n".join(rows) + "\n"


def _study(cfg: RunConfig, degree: int) -> tuple[list[ConvergenceRecord], LevelResult]:
    case = get_case(cfg.case, **cfg.case_params())
    spec = case.problem(penalty=cfg.penalty, nitsche=cfg.nitsche)
    kw = dict(quad=cfg.quad, tol=cfg.tol, threads=cfg.threads, solver=cfg.solver)
    levels = range(cfg.levels)
    if case.exact is None:
        gap = case.reference_gap or 2
        return reference_study(spec, degree, levels, cfg.levels - 1 + gap, **kw)
    recs, results = convergence_study(spec, degree, levels, **kw)
    return recs, results[-1]


def _run_one(cfg: RunConfig, degree: int) -> Path:
    recs, finest = _study(cfg, degree)
    text = format_csv(recs)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.case}_k{degree}.csv"
    path.write_text(text)
    sys.stdout.write(text)
    if cfg.vtk:
        write_vtk(field_of(finest), out / f"{cfg.case}_k{degree}")
    return path


def cmd_run(cfg: RunConfig) -> int:
    return _guarded(cfg, [cfg.degree])


def cmd_sweep(cfg: RunConfig) -> int:
    return _guarded(cfg, list(cfg.degrees or (cfg.degree,)))


def _guarded(cfg: RunConfig, degrees: list[int]) -> int:
    try:
        cfg.validate()
        for k in degrees:
            _run_one(cfg, k)
    except UnknownNameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def list_lines(max_degree: int = 3) -> list[str]:
    """One line per registered case with its default expected dG rates."""
    lines = []
    for name in case_names():
        case = get_case(name)
        rates = []
        for k in range(1, max_degree + 1):
            r = case.expected(k, "dg")
            rates.append("-" if r is None else f"{r:.4g}")
        lines.append(f"{name:<16} {case.geometry:<20} dg rate k=1..{max_degree}: {' '.join(rates)}")
    return lines


def cmd_list() -> int:
    print("\n".join(list_lines()))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgiga", description="dG isogeometric convergence experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="show registered cases and expected rates")
    for name in ("run", "sweep"):
        s = sub.add_parser(name, help="convergence study" if name == "run" else "study over several degrees")
        s.add_argument("--config", help="key = value file; command-line flags win")
        s.add_argument("--case")
        s.add_argument("--levels", type=int, help="number of levels, starting at 0")
        if name == "run":
            s.add_argument("--degree", type=int)
        else:
            s.add_argument("--degrees", type=int, nargs="+")
        s.add_argument("--penalty", type=float, help="interior penalty factor")
        s.add_argument("--grading", type=float, help="grading exponent in (0, 1]")
        s.add_argument("--quad", type=int, help="Gauss points per direction")
        s.add_argument("--tol", type=float, help="relative solver tolerance")
        s.add_argument("--out", help="output directory")
        s.add_argument("--solver", choices=("auto", "cg", "dense", "direct"))
        s.add_argument("--no-nitsche", dest="nitsche", action="store_const", const=False,
                       help="drop the flux term from the boundary data")
        s.add_argument("--vtk", action="store_const", const=True, help="write the finest field as VTK")
        s.add_argument("--threads", type=int, help="assembly threads (default: DGIGA_THREADS or 1)")
        s.add_argument("--ratio", type=int, help="mesh ratio for two_patch_sine")
        s.add_argument("--lam", type=float, help="singularity exponent")
        s.add_argument("--dim", type=int, help="dimension for radial_singular / patch_test")
        s.add_argument("--contrast", type=float, help="coefficient contrast for torus_jump")
        s.add_argument("--base", type=int, help="spans per patch direction on level 0")
    return p


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key in _TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = tuple(v) if isinstance(v, list) else v
    return RunConfig(**values)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        return cmd_list()
    try:
        cfg = build_config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return cmd_run(cfg) if args.command == "run" else cmd_sweep(cfg)


if __name__ == "__main__":
    sys.exit(main())
