"""Command-line front door.

``fractal-forms geometry|measure|form|study|solve`` with flags or a
``key = value`` config file split into ``[sections]``; flags win over the
file. Outputs go to stdout or, with ``--out DIR``, to files, and every
output embeds the resolved configuration and ``"schema": 1``.

Exit status: 0 on success, 2 on validation errors (bad flags, malformed
config, unknown names), 3 on numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; the message carries file and line when known."""


# --------------------------------------------------------------------------
# value parsers


def parse_number(text: str) -> float:
    """Float or fraction (``1/3``)."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def parse_levels(text: str) -> tuple[int, int]:
    """``"1..5"`` or a single level ``"3"``."""
    parts = text.strip().split("..")
    if len(parts) == 1:
        n = int(parts[0])
        return n, n
    if len(parts) != 2:
        raise ValueError(f"levels must look like 1..5, got {text!r}")
    return int(parts[0]), int(parts[1])


def _list(conv):
    def f(text: str):
        return tuple(conv(s) for s in text.split(",") if s.strip())
    return f


def _str(text: str) -> str:
    return text.strip()


# section -> key -> parser; flag names use the same keys
KEYS = {
    "curve": {"p": parse_number, "q": parse_number, "omega": _list(parse_number),
              "file": _str},
    "form": {"alpha": float, "quad_order": int, "A": parse_number, "sigma_mode": _str,
             "depth": int, "eta": float, "mode": _str},
    "study": {"levels": parse_levels, "ref_depth": int, "functions": _list(_str),
              "h_factor": float, "checkpoints": _list(float), "final_rel_gap": float,
              "short_ratio": float},
    "solve": {"lambda": float, "dt": float, "T": float, "h_factor": float,
              "f": _str, "g": _str, "u0": _str, "checkpoints": _list(float)},
    "run": {"level": int, "seed": int, "samples": int},
}


def read_config(text: str, source: str = "<config>") -> dict:
    """Parse sectioned ``key = value`` text into ``{section: {key: value}}``.

    ``#`` and ``;`` start comments. Unknown sections or keys and values that
    fail to parse raise :class:`ConfigError` naming the offending line.
    """
    out: dict = {}
    section = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{ln}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: unterminated section header")
            section = line[1:-1].strip()
            if section not in KEYS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            out.setdefault(section, {})
            continue
        if section is None:
            raise ConfigError(f"{where}: key outside of any section")
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KEYS[section]:
            raise ConfigError(f"{where}: unknown key {k!r} in [{section}]")
        try:
            out[section][k] = KEYS[section][k](v)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: bad value for {k}: {exc}") from None
    return out


# --------------------------------------------------------------------------
# resolved configuration


@dataclass
class CommandConfig:
    """A command with its resolved settings."""

    command: str
    kind: str | None = None
    settings: dict = field(default_factory=dict)
    out: Path | None = None
    config_path: str | None = None

    def get(self, section, key, default=None):
        return self.settings.get(section, {}).get(key, default)

    def resolved(self) -> dict:
        d = {"command": self.command, "kind": self.kind}
        for sec in sorted(self.settings):
            d[sec] = {k: _jsonable(v) for k, v in sorted(self.settings[sec].items())}
        return d


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


# flag dest -> (section, key, parser); flags are applied on top of the file
FLAGS = {
    "p": ("curve", "p", parse_number), "q": ("curve", "q", parse_number),
    "omega": ("curve", "omega", _list(parse_number)), "curve_file": ("curve", "file", _str),
    "alpha": ("form", "alpha", float), "quad_order": ("form", "quad_order", int),
    "A": ("form", "A", parse_number), "sigma_mode": ("form", "sigma_mode", _str),
    "depth": ("form", "depth", int), "eta": ("form", "eta", float), "mode": ("form", "mode", _str),
    "levels": ("study", "levels", parse_levels), "ref_depth": ("study", "ref_depth", int),
    "fn": ("study", "functions", _list(_str)), "h_factor": ("solve", "h_factor", float),
    "level": ("run", "level", int), "lam": ("solve", "lambda", float),
    "dt": ("solve", "dt", float), "T": ("solve", "T", float), "f": ("solve", "f", _str),
    "g": ("solve", "g", _str), "u0": ("solve", "u0", _str),
    "checkpoints": ("solve", "checkpoints", _list(float)),
    "seed": ("run", "seed", int), "samples": ("run", "samples", int),
}


def resolve(args: argparse.Namespace) -> CommandConfig:
    settings: dict = {}
    if getattr(args, "config", None):
        path = args.config
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        settings = read_config(text, path)
    for dest, (sec, key, conv) in FLAGS.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        try:
            settings.setdefault(sec, {})[key] = conv(v) if isinstance(v, str) else v
        except ValueError as exc:
            raise ConfigError(f"--{dest.replace('_', '-')}: {exc}") from None
    out = Path(args.out) if getattr(args, "out", None) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"{out}: output directory is not writable")
    return CommandConfig(args.command, getattr(args, "kind", None), settings, out,
                         getattr(args, "config", None))


# --------------------------------------------------------------------------
# building blocks from the config


def _curve(cc: CommandConfig):
    from .geometry import SnowflakeCurve, load_curve
    if cc.get("curve", "file"):
        return load_curve(cc.get("curve", "file"))
    p = cc.get("curve", "p", 1 / 3)
    return SnowflakeCurve(p=p, q=cc.get("curve", "q"), omega=cc.get("curve", "omega"))


def _snowflake(cc: CommandConfig):
    from .geometry import SnowflakeCurve
    c = _curve(cc)
    if not isinstance(c, SnowflakeCurve):
        raise ConfigError(f"{cc.command} needs a snowflake curve, not a polyline")
    return c


def load_data_function(path: str):
    """Boundary data file: CSV rows ``x,y,value`` (header optional).

    The function is the inf-convolution extension of the data with the
    smallest Lipschitz constant the data admit.
    """
    from .forms import lipschitz_extension
    rows = []
    with open(path, newline="") as fh:
        for k, rec in enumerate(csv.reader(fh), 1):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(x) for x in rec[:3]])
            except ValueError:
                if k == 1:
                    continue
                raise ConfigError(f"{path}:{k}: expected x,y,value") from None
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3 or len(data) < 1:
        raise ConfigError(f"{path}: expected rows x,y,value")
    P, v = data[:, :2], data[:, 2]
    d = np.linalg.norm(P[:, None] - P[None], axis=2)
    off = d > 0
    L = float(np.max(np.abs(v[:, None] - v[None])[off] / d[off])) if off.any() else 0.0
    fn = lipschitz_extension(P, v, L, check=False)
    fn.name = Path(path).name
    return fn


def function_from_name(name: str):
    """Catalog name, numeric constant or path to a data file."""
    from .forms import BoundaryFunction, test_function
    try:
        c = parse_number(name)
        return BoundaryFunction(lambda p: np.full(len(p), c), 0.0, f"const={c!r}")
    except ValueError:
        pass
    if Path(name).is_file():
        return load_data_function(name)
    return test_function(name)


def _form_spec(cc: CommandConfig, curve, constants, n):
    from .forms import FormSpec
    kw = dict(alpha=cc.get("form", "alpha", 1.0), quad_order=cc.get("form", "quad_order", 4),
              sigma_mode=cc.get("form", "sigma_mode", "measure_scaled"))
    if cc.get("form", "eta") is not None:
        kw["eta"] = cc.get("form", "eta")
    if n is None:
        return FormSpec(**kw)
    return FormSpec.for_level(curve, constants, n, A=cc.get("form", "A"), **kw)


# --------------------------------------------------------------------------
# output


class Output:
    """Collects named artifacts; writes them to ``out`` or the primary one to stdout."""

    def __init__(self, cc: CommandConfig, stdout=None):
        self.cc = cc
        self.stdout = sys.stdout if stdout is None else stdout
        self.files: list = []

    def _header(self) -> str:
        return json.dumps(self.cc.resolved(), sort_keys=True)

    def json(self, name: str, payload: dict, primary: bool = False):
        body = {"schema": 1, "config": self.cc.resolved(), **payload}
        self._emit(name, json.dumps(body, sort_keys=True, indent=1) + "\n", primary)

    def csv(self, name: str, text: str, primary: bool = False):
        head = "# schema: 1\n# command: " + self._header() + "\n"
        if text.startswith("# schema: 1\n"):
            text = text[len("# schema: 1\n"):]
        self._emit(name, head + text, primary)

    def svg(self, name: str, text: str):
        comment = "<!-- schema: 1; config: " + self._header().replace("--", "- -") + " -->\n"
        self._emit(name, comment + text, False)

    def _emit(self, name, text, primary):
        if self.cc.out is not None:
            path = self.cc.out / name
            path.write_text(text)
            self.files.append(str(path))
        elif primary:
            self.stdout.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_geometry(cc: CommandConfig, out: Output):
    from .geometry import build_level, is_simple
    curve = _curve(cc)
    n = cc.get("run", "level", 0)
    if hasattr(curve, "vertices"):
        lvl = curve
    else:
        lvl = build_level(curve, n)
    payload = {"level": lvl.level, "n_edges": lvl.n_edges, "area": lvl.area(),
               "simple": bool(is_simple(lvl.vertices)), **{k: v for k, v in lvl.to_json().items()
                                                          if k != "schema"}}
    out.json(f"geometry_level{lvl.level}.json", payload, primary=True)
    out.svg(f"geometry_level{lvl.level}.svg", lvl.to_svg())


def cmd_measure(cc: CommandConfig, out: Output):
    from .geometry import build_level, estimate_constants
    from .measures import BoundaryMeasure, build_averaged, verify_scaling
    curve = _snowflake(cc)
    n = cc.get("run", "level", 1)
    seed = cc.get("run", "seed", 0)
    mu = BoundaryMeasure(curve)
    lvl = build_level(curve, n)
    mun = build_averaged(mu, lvl)
    constants = estimate_constants(curve, seed=seed)
    rep = verify_scaling(mun, n_points=cc.get("run", "samples", 1000), seed=seed,
                         constants=constants)
    m = mun.to_json()
    m.pop("schema", None)
    out.json(f"measure_level{n}.json", {"measure": {**m, "total_mass": mun.total_mass},
                                        "scaling": rep.to_json()}, primary=True)


def cmd_form(cc: CommandConfig, out: Output):
    from .forms import eval_Q_fractal, eval_Q_prefractal
    from .geometry import build_level, estimate_constants
    from .measures import BoundaryMeasure, build_averaged
    curve = _snowflake(cc)
    fns = cc.get("study", "functions", ("coord-x",))
    if len(fns) != 1:
        raise ConfigError("form evaluates exactly one function")
    phi = function_from_name(fns[0])
    mode = cc.get("form", "mode", "prefractal")
    mu = BoundaryMeasure(curve)
    constants = estimate_constants(curve, seed=cc.get("run", "seed", 0))
    if mode == "fractal":
        depth = cc.get("form", "depth", 6)
        ev = eval_Q_fractal(_form_spec(cc, curve, constants, None), mu, phi, depth)
    elif mode == "prefractal":
        n = cc.get("run", "level", 1)
        ev = eval_Q_prefractal(_form_spec(cc, curve, constants, n), build_averaged(mu, build_level(curve, n)),
                               phi, mu)
    else:
        raise ConfigError(f"unknown form mode {mode!r}; use prefractal or fractal")
    payload = ev.to_json()
    payload.pop("schema", None)
    payload["function"] = phi.name
    out.json("form.json", payload, primary=True)


def _study_config(cc: CommandConfig):
    from .convergence import StudyConfig
    lo, hi = cc.get("study", "levels", (1, 5 if cc.kind in ("energy", "measure") else 4))
    tol = {"final_rel_gap": cc.get("study", "final_rel_gap", 0.05),
           "short_ratio": cc.get("study", "short_ratio", 1 / 3)}
    kw = dict(curve=_snowflake(cc), n_lo=lo, n_hi=hi, ref_depth=cc.get("study", "ref_depth"),
              functions=cc.get("study", "functions", ("coord-x",)),
              alpha=cc.get("form", "alpha", 1.0), A=cc.get("form", "A"),
              sigma_mode=cc.get("form", "sigma_mode", "measure_scaled"),
              quad_order=cc.get("form", "quad_order", 4), tolerances=tol,
              lam=cc.get("solve", "lambda", 1.0),
              h_factor=cc.get("study", "h_factor", cc.get("solve", "h_factor", 1.0)),
              seed=cc.get("run", "seed", 0))
    if cc.get("solve", "dt") is not None:
        kw["dt"] = cc.get("solve", "dt")
    cps = cc.get("study", "checkpoints", cc.get("solve", "checkpoints"))
    if cps:
        kw["checkpoints"] = tuple(cps)
    return StudyConfig(**kw)


def cmd_study(cc: CommandConfig, out: Output):
    from . import convergence as cv
    from .solver import EllipticProblem, ParabolicProblem
    if cc.kind not in cv.STUDIES:
        raise ConfigError(f"unknown study {cc.kind!r}; choose from {sorted(cv.STUDIES)}")
    cfg = _study_config(cc)
    cfg.functions = tuple(function_from_name(f) for f in cfg.functions)
    if cc.kind == "elliptic":
        prob = EllipticProblem(cfg.lam, function_from_name(cc.get("solve", "f", "1")),
                               function_from_name(cc.get("solve", "g", "0")))
        rep = cv.elliptic_stability_study(cfg, prob)
    elif cc.kind == "parabolic":
        T = cc.get("solve", "T", max(cfg.checkpoints))
        prob = ParabolicProblem(cfg.lam, function_from_name(cc.get("solve", "u0", "coord-x")),
                                cfg.dt, T, tuple(cfg.checkpoints))
        rep = cv.parabolic_stability_study(cfg, prob)
    else:
        rep = cv.STUDIES[cc.kind](cfg)
    out.csv(f"study_{cc.kind}.csv", rep.to_csv(), primary=True)
    payload = {k: v for k, v in rep.to_json().items() if k != "schema"}
    payload["study_config"] = payload.pop("config")
    out.json(f"study_{cc.kind}.json", payload)
    out.svg(f"study_{cc.kind}.svg", rep.to_svg())


def cmd_solve(cc: CommandConfig, out: Output):
    from .geometry import build_level, estimate_constants
    from .measures import BoundaryMeasure, build_averaged
    from .solver import (EllipticProblem, ParabolicProblem, assemble_system, mesh_json,
                         solution_csv, solve_elliptic, step_parabolic, triangulate)
    if cc.kind not in ("elliptic", "parabolic"):
        raise ConfigError(f"unknown problem {cc.kind!r}; use elliptic or parabolic")
    curve = _snowflake(cc)
    n = cc.get("run", "level", 2)
    lam = cc.get("solve", "lambda", 1.0)
    mu = BoundaryMeasure(curve)
    lvl = build_level(curve, n)
    mun = build_averaged(mu, lvl)
    constants = estimate_constants(curve, seed=cc.get("run", "seed", 0))
    mesh = triangulate(lvl, cc.get("solve", "h_factor", 1.0) * float(lvl.edge_lengths.min()))
    system = assemble_system(mesh, mun, _form_spec(cc, curve, constants, n), lam)
    out.json("mesh.json", {"mesh": json.loads(mesh_json(mesh))})
    if cc.kind == "elliptic":
        prob = EllipticProblem(lam, function_from_name(cc.get("solve", "f", "1")),
                               function_from_name(cc.get("solve", "g", "0")))
        sol = solve_elliptic(system, prob)
        out.csv("solution.csv", solution_csv(mesh, sol.u), primary=True)
        out.json("solution.json", {"residual": sol.residual, "iterations": sol.iterations,
                                   "energy": sol.energy, "n_nodes": mesh.n_nodes})
        return
    dt = cc.get("solve", "dt", 0.0005)
    cps = tuple(cc.get("solve", "checkpoints", (0.1,)))
    T = cc.get("solve", "T", max(cps))
    prob = ParabolicProblem(lam, function_from_name(cc.get("solve", "u0", "coord-x")), dt, T, cps)
    traj = step_parabolic(system, prob)
    for t, u in zip(traj.times, traj.states):
        out.csv(f"state_t{t:.6f}.csv", solution_csv(mesh, u), primary=(t == traj.times[-1]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "time", "norm", "dissipation"])
    for k, (nm, ds) in enumerate(zip(traj.norms, traj.dissipation)):
        w.writerow([k, repr(k * dt), repr(float(nm)), repr(float(ds))])
    out.csv("norms.csv", buf.getvalue())


COMMANDS = {"geometry": cmd_geometry, "measure": cmd_measure, "form": cmd_form,
            "study": cmd_study, "solve": cmd_solve}


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="key = value config file with [sections]")
    g.add_argument("--out", help="output directory (default: primary output to stdout)")
    g.add_argument("--p", dest="p", help="larger scale factor, e.g. 1/3")
    g.add_argument("--q", dest="q", help="smaller scale factor")
    g.add_argument("--omega", help="comma-separated scale choices per step")
    g.add_argument("--curve-file", dest="curve_file", help="curve JSON (snowflake or polyline)")
    g.add_argument("--level", help="polygon level n")
    g.add_argument("--alpha")
    g.add_argument("--quad-order", dest="quad_order")
    g.add_argument("--A", dest="A", help="cutoff constant override")
    g.add_argument("--sigma-mode", dest="sigma_mode")
    g.add_argument("--eta", help="cluster separation for double sums (0 = direct)")
    g.add_argument("--depth", help="arc depth for fractal evaluations")
    g.add_argument("--seed")

    p = _Parser(prog="fractal-forms", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("geometry", parents=[common], help="polygon JSON/SVG")
    m = sub.add_parser("measure", parents=[common], help="averaged measure and scaling report")
    m.add_argument("--samples", help="number of (xi, r) probes")
    f = sub.add_parser("form", parents=[common], help="evaluate a boundary energy")
    f.add_argument("--fn", help="catalog name, constant or x,y,value data file")
    f.add_argument("--mode", help="prefractal (default) or fractal")
    s = sub.add_parser("study", parents=[common], help="convergence and stability studies")
    s.add_argument("kind", help="energy | measure | superposition | elliptic | parabolic")
    s.add_argument("--levels", help="level range, e.g. 1..5")
    s.add_argument("--ref-depth", dest="ref_depth")
    s.add_argument("--fn", help="comma-separated function names")
    for name in ("lambda", "dt", "T", "f", "g", "u0", "checkpoints"):
        s.add_argument(f"--{name}", dest="lam" if name == "lambda" else name)
    s.add_argument("--h-factor", dest="h_factor")
    v = sub.add_parser("solve", parents=[common], help="solve on one polygonal domain")
    v.add_argument("kind", help="elliptic | parabolic")
    for name in ("lambda", "dt", "T", "f", "g", "u0", "checkpoints"):
        v.add_argument(f"--{name}", dest="lam" if name == "lambda" else name)
    v.add_argument("--h-factor", dest="h_factor")
    return p


def run(argv=None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, execute, return the exit status."""
    from .solver import SolverError
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("missing command; choose from " + ", ".join(COMMANDS))
        cc = resolve(args)
        out = Output(cc, stdout)
        COMMANDS[cc.command](cc, out)
        for path in out.files:
            print(path, file=stderr)
        return EXIT_OK
    except (SolverError, FloatingPointError, MemoryError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_INVALID


def main():  # pragma: no cover
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
