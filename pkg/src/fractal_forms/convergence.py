"""Desk-scale convergence studies across polygonal levels.

Limit objects (the curve, its measure, the fractal form, the limit domain)
are always stood in for by a deeper polygonal or arc-level proxy whose depth
is stated in every report. Stability studies compare consecutive levels
(Cauchy gaps) because no exact limit solution is available.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .forms import (BoundaryFunction, FormSpec, eval_Q_fractal, eval_Q_prefractal,
                    lipschitz_extension, test_function)
from .geometry import SnowflakeCurve, build_level, estimate_constants
from .measures import (AveragedMeasure, BoundaryMeasure, build_averaged, gauss_on_edges,
                       integrate_fractal, integrate_prefractal)
from .solver import (AssembledSystem, EllipticProblem, ParabolicProblem, assemble_system,
                     solve_elliptic, step_parabolic, triangulate)

ROBUSTNESS_FRACTION = 0.2


@dataclass
class StudyConfig:
    """Inputs shared by all studies.

    ``ref_depth`` defaults to ``n_hi + 3``; ``A`` overrides the default cutoff
    constant; ``h_factor`` scales the mesh size relative to the shortest
    polygon edge.
    """

    curve: SnowflakeCurve = field(default_factory=SnowflakeCurve)
    n_lo: int = 1
    n_hi: int = 5
    ref_depth: int | None = None
    functions: tuple = ("coord-x",)
    alpha: float = 1.0
    sigma_mode: str = "measure_scaled"
    A: float | None = None
    quad_order: int = 4
    tolerances: dict = field(default_factory=lambda: {"final_rel_gap": 0.05, "short_ratio": 1 / 3})
    lam: float = 1.0
    h_factor: float = 1.0
    dt: float = 0.0005
    checkpoints: tuple = (0.1,)
    check_reference: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_lo < 0 or self.n_hi < self.n_lo:
            raise ValueError("need 0 <= n_lo <= n_hi")
        if self.ref_depth is None:
            self.ref_depth = self.n_hi + 3
        if self.ref_depth < self.n_hi + 3:
            raise ValueError("reference depth must be at least n_hi + 3")

    @property
    def levels(self) -> range:
        return range(self.n_lo, self.n_hi + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["curve"] = self.curve.to_dict()
        d["functions"] = [getattr(f, "name", f) for f in self.functions]
        d["checkpoints"] = list(self.checkpoints)
        return d


@dataclass
class StudyReport:
    """Gap tables plus verdicts.

    ``rows`` hold ``level, function, quantity, value, reference, gap``;
    ``verdicts`` map a check name to pass/fail; ``rates`` hold the fitted
    ratio of consecutive gaps per quantity.
    """

    study: str
    rows: list
    verdicts: dict
    rates: dict
    config: dict
    proxy_depth: int | None = None
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for r in self.rows:
            if r["gap"] is not None and r["gap"] < 0:
                raise ValueError("gaps are nonnegative by construction")

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def series(self, quantity: str, function: str | None = None, key: str = "gap"):
        rows = [r for r in self.rows if r["quantity"] == quantity
                and (function is None or r["function"] == function)]
        return [r["level"] for r in rows], [r[key] for r in rows]

    def to_json(self) -> dict:
        return {"schema": 1, "study": self.study, "proxy_depth": self.proxy_depth,
                "config": self.config, "rows": self.rows, "verdicts": self.verdicts,
                "rates": self.rates, "flags": self.flags, "passed": self.passed,
                "extra": self.extra}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# schema: 1\n")
        buf.write(f"# study: {self.study}\n")
        buf.write(f"# proxy_depth: {self.proxy_depth}\n")
        buf.write("# config: " + json.dumps(self.config, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = ["level", "function", "quantity", "value", "reference", "gap"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()

    def to_svg(self, width: int = 480, height: int = 320) -> str:
        """Log-scale gap against level, one polyline per (function, quantity)."""
        keys = sorted({(r["function"], r["quantity"]) for r in self.rows})
        pts = {k: [(r["level"], r["gap"]) for r in self.rows
                   if (r["function"], r["quantity"]) == k and r["gap"] and r["gap"] > 0]
               for k in keys}
        allp = [p for v in pts.values() for p in v]
        lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
                 f'<text x="10" y="16" font-size="12">{self.study}: log10 gap vs level</text>']
        if allp:
            xs = [p[0] for p in allp]
            ys = [math.log10(p[1]) for p in allp]
            x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
            y0, y1 = min(ys), max(ys) if max(ys) > min(ys) else min(ys) + 1
            colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
            for i, k in enumerate(keys):
                if not pts[k]:
                    continue
                path = " ".join(
                    f"{40 + (lv - x0) / (x1 - x0) * (width - 60):.1f},"
                    f"{height - 30 - (math.log10(g) - y0) / (y1 - y0) * (height - 60):.1f}"
                    for lv, g in pts[k])
                c = colours[i % len(colours)]
                lines.append(f'<polyline fill="none" stroke="{c}" points="{path}"/>')
                lines.append(f'<text x="{width - 150}" y="{30 + 14 * i}" font-size="10" '
                             f'fill="{c}">{k[0]} {k[1]}</text>')
        lines.append("</svg>")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _as_function(fn) -> BoundaryFunction:
    return fn if isinstance(fn, BoundaryFunction) else test_function(fn)


def strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def decay_rate(levels, gaps) -> float | None:
    """Least-squares ratio of consecutive gaps (``exp`` of the log-slope)."""
    pairs = [(lv, g) for lv, g in zip(levels, gaps) if g is not None and g > 0]
    if len(pairs) < 2:
        return None
    x = np.array([p[0] for p in pairs], float)
    y = np.log([p[1] for p in pairs])
    return float(math.exp(np.polyfit(x, y, 1)[0]))


def _row(level, fn, quantity, value, reference, gap):
    return {"level": level, "function": fn, "quantity": quantity,
            "value": None if value is None else float(value),
            "reference": None if reference is None else float(reference),
            "gap": None if gap is None else float(gap)}


class _Context:
    """Shared objects of a study: measure, constants, levels."""

    def __init__(self, cfg: StudyConfig):
        self.cfg = cfg
        self.mu = BoundaryMeasure(cfg.curve)
        self.constants = estimate_constants(cfg.curve)
        self._lvl = {}

    def level(self, n):
        if n not in self._lvl:
            lvl = build_level(self.cfg.curve, n)
            self._lvl[n] = (lvl, build_averaged(self.mu, lvl))
        return self._lvl[n]

    def spec(self, n=None, **kw) -> FormSpec:
        c = self.cfg
        base = dict(alpha=c.alpha, sigma_mode=c.sigma_mode, quad_order=c.quad_order)
        base.update(kw)
        if n is None:
            return FormSpec(**base)
        return FormSpec.for_level(c.curve, self.constants, n, A=c.A, **base)


def _robustness(report: StudyReport, pairs, gaps):
    """Flag when moving the proxy one level shallower shifts a reference by too much."""
    pos = [g for g in gaps if g is not None and g > 1e-12]
    if not pos:
        return
    shift = max(abs(a - b) for a, b in pairs) if pairs else 0.0
    report.extra["reference_shift"] = shift
    report.extra["smallest_gap"] = min(pos)
    if shift >= ROBUSTNESS_FRACTION * min(pos):
        report.flags.append("reference not converged")


# --------------------------------------------------------------------------
# studies


def energy_study(cfg: StudyConfig) -> StudyReport:
    """``Q_n(u)`` against the fractal form at the proxy depth, with short-part decay."""
    ctx = _Context(cfg)
    D = cfg.ref_depth
    rows, verdicts, rates, ref_pairs, all_gaps, parts = [], {}, {}, [], [], {}
    for name in cfg.functions:
        phi = _as_function(name)
        name = phi.name
        if phi.lipschitz_bound is None:
            raise ValueError(f"{name}: energy studies need a Lipschitz bound")
        ref = eval_Q_fractal(ctx.spec(), ctx.mu, phi, D, error_estimate=False).value
        if cfg.check_reference:
            ref_pairs.append((ref, eval_Q_fractal(ctx.spec(), ctx.mu, phi, D - 1,
                                                  error_estimate=False).value))
        gaps, shorts = [], []
        for n in cfg.levels:
            _, mun = ctx.level(n)
            ev = eval_Q_prefractal(ctx.spec(n), mun, phi, ctx.mu)
            gap = abs(ev.value - ref)
            gaps.append(gap)
            shorts.append(ev.short_part)
            rows.append(_row(n, name, "Q_n", ev.value, ref, gap))
            parts.setdefault(name, {})[str(n)] = {"short": ev.short_part, "long": ev.long_part}
        all_gaps += gaps
        lv = list(cfg.levels)
        rates[f"{name}:Q_n"] = decay_rate(lv, gaps)
        if ref == 0:
            verdicts[f"{name}:zero_gaps"] = all(g == 0 for g in gaps)
            continue
        verdicts[f"{name}:gap_decreasing"] = strictly_decreasing(gaps)
        verdicts[f"{name}:final_rel_gap"] = gaps[-1] / abs(ref) < cfg.tolerances["final_rel_gap"]
        if shorts[0] > 0:
            verdicts[f"{name}:short_decay"] = shorts[-1] / shorts[0] <= cfg.tolerances["short_ratio"]
    rep = StudyReport("energy", rows, verdicts, rates, cfg.to_dict(), D, extra={"parts": parts})
    if cfg.check_reference:
        _robustness(rep, ref_pairs, all_gaps)
    return rep


def _extension_proxy(ctx: _Context, phi: BoundaryFunction, depth: int):
    """Inf-convolution extension of ``phi`` restricted to the depth-``depth`` arc points."""
    pts = ctx.mu.arc_points(depth)
    L = phi.lipschitz_bound
    if L is None:
        raise ValueError("extension needs a Lipschitz bound")
    return lipschitz_extension(pts, phi(pts), L, check=False)


def measure_study(cfg: StudyConfig, ext_depth: int | None = None) -> StudyReport:
    """Weak convergence of ``mu_n`` and the convergence of ``L^2(mu_n)`` norms.

    The norm on level ``n`` is taken of the inf-convolution extension of the
    proxy data (the identification map); ``ext_depth`` sets how many proxy
    points feed that extension (default ``min(ref_depth, n_hi + 2)``).
    """
    ctx = _Context(cfg)
    D = cfg.ref_depth
    ext_depth = min(D, cfg.n_hi + 2) if ext_depth is None else ext_depth
    rows, verdicts, rates, ref_pairs, all_gaps = [], {}, {}, [], []
    for name in cfg.functions:
        phi = _as_function(name)
        name = phi.name
        ref_int = integrate_fractal(ctx.mu, phi, D)
        ref_norm = math.sqrt(integrate_fractal(ctx.mu, lambda x: phi(x) ** 2, D))
        if cfg.check_reference:
            ref_pairs.append((ref_int, integrate_fractal(ctx.mu, phi, D - 1)))
        ext = _extension_proxy(ctx, phi, ext_depth)
        g_int, g_norm = [], []
        for n in cfg.levels:
            _, mun = ctx.level(n)
            val = integrate_prefractal(mun, phi)
            nrm = math.sqrt(integrate_prefractal(mun, lambda x: ext(x) ** 2))
            g_int.append(abs(val - ref_int))
            g_norm.append(abs(nrm - ref_norm))
            rows.append(_row(n, name, "integral", val, ref_int, g_int[-1]))
            rows.append(_row(n, name, "ks_norm", nrm, ref_norm, g_norm[-1]))
        all_gaps += g_int
        lv = list(cfg.levels)
        rates[f"{name}:integral"] = decay_rate(lv, g_int)
        rates[f"{name}:ks_norm"] = decay_rate(lv, g_norm)
        if name == "const":
            verdicts[f"{name}:zero_gaps"] = max(g_int + g_norm) < 1e-12
        else:
            verdicts[f"{name}:ks_norm_decreasing"] = strictly_decreasing(g_norm)
    rep = StudyReport("measure", rows, verdicts, rates, cfg.to_dict(), D,
                      extra={"extension_depth": ext_depth})
    if cfg.check_reference:
        _robustness(rep, ref_pairs, all_gaps)
    return rep


def _grad_sq(phi: BoundaryFunction, step: float = 1e-3):
    """``|grad phi|^2``: analytic when available, else a five-point stencil."""
    if phi.gradient is not None:
        return lambda x: np.sum(np.asarray(phi.gradient(x), dtype=float) ** 2, axis=1)
    coef = np.array([1.0, -8.0, 8.0, -1.0]) / (12 * step)
    offs = np.array([-2.0, -1.0, 1.0, 2.0]) * step

    def g(x):
        out = np.zeros(len(x))
        for axis in (0, 1):
            d = np.zeros(2)
            d[axis] = 1.0
            gk = sum(c * phi(x + o * d) for c, o in zip(coef, offs))
            out += gk * gk
        return out
    return g


def domain_integral(vertices, g, order: int = 8) -> float:
    """``int_Omega g`` over a simple polygon via Green's theorem.

    With ``P(x, y) = int_{x0}^{x} g(s, y) ds`` the integral is the boundary
    integral of ``P dy``; both integrals use Gauss rules, exact for
    polynomial ``g`` of moderate degree.
    """
    V = np.asarray(vertices, dtype=float)
    a, b = V, np.roll(V, -1, axis=0)
    gq, wq = np.polynomial.legendre.leggauss(order)
    gq, wq = 0.5 * (gq + 1), 0.5 * wq
    x0 = float(V[:, 0].min())
    total = 0.0
    sign = 1.0 if _signed_area(V) > 0 else -1.0
    for s in range(0, len(a), 65536):
        A, B = a[s:s + 65536], b[s:s + 65536]
        P = A[:, None, :] + gq[None, :, None] * (B - A)[:, None, :]      # edge nodes
        dy = (B - A)[:, 1]
        xs = x0 + (P[..., 0] - x0)[..., None] * gq                     # inner nodes
        ys = np.broadcast_to(P[..., 1][..., None], xs.shape)
        vals = np.asarray(g(np.stack([xs.ravel(), ys.ravel()], axis=1)), float).reshape(xs.shape)
        inner = (P[..., 0] - x0) * np.tensordot(vals, wq, axes=([2], [0]))
        total += float(np.sum(dy[:, None] * wq[None, :] * inner))
    return sign * total


def _signed_area(V):
    x, y = V[:, 0], V[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def superposition_study(cfg: StudyConfig) -> StudyReport:
    """``D_n(u) + Q_n(u)`` against the proxy-depth ``D(u) + Q(u)``."""
    if cfg.alpha != 1:
        raise ValueError("the superposition study is set up for alpha = 1")
    ctx = _Context(cfg)
    D = cfg.ref_depth
    ref_poly = build_level(cfg.curve, D).vertices
    rows, verdicts, rates, ref_pairs, all_gaps = [], {}, {}, [], []
    for name in cfg.functions:
        phi = _as_function(name)
        name = phi.name
        g = _grad_sq(phi)
        d_ref = domain_integral(ref_poly, g)
        q_ref = eval_Q_fractal(ctx.spec(), ctx.mu, phi, D, error_estimate=False).value
        e_ref = d_ref + q_ref
        if cfg.check_reference:
            ref_pairs.append((e_ref, domain_integral(build_level(cfg.curve, D - 1).vertices, g)
                              + eval_Q_fractal(ctx.spec(), ctx.mu, phi, D - 1,
                                               error_estimate=False).value))
        gaps, dn = [], []
        for n in cfg.levels:
            lvl, mun = ctx.level(n)
            d_n = domain_integral(lvl.vertices, g)
            q_n = eval_Q_prefractal(ctx.spec(n), mun, phi, ctx.mu).value
            gaps.append(abs(d_n + q_n - e_ref))
            dn.append(d_n)
            rows.append(_row(n, name, "D_n", d_n, d_ref, abs(d_n - d_ref)))
            rows.append(_row(n, name, "Q_n", q_n, q_ref, abs(q_n - q_ref)))
            rows.append(_row(n, name, "E_n", d_n + q_n, e_ref, gaps[-1]))
        all_gaps += gaps
        rates[f"{name}:E_n"] = decay_rate(list(cfg.levels), gaps)
        if e_ref == 0:
            verdicts[f"{name}:zero_energy"] = all(gp == 0 for gp in gaps)
        else:
            verdicts[f"{name}:E_gap_decreasing"] = strictly_decreasing(gaps)
    rep = StudyReport("superposition", rows, verdicts, rates, cfg.to_dict(), D)
    if cfg.check_reference:
        _robustness(rep, ref_pairs, all_gaps)
    return rep


# --------------------------------------------------------------------------
# stability studies


def _sample_points(curve: SnowflakeCurve, k: int = 8) -> np.ndarray:
    """Barycentric grid strictly inside the level-0 triangle (inside every level)."""
    V = build_level(curve, 0).vertices
    pts = []
    for i in range(1, k):
        for j in range(1, k - i):
            l0, l1 = i / k, j / k
            pts.append(l0 * V[0] + l1 * V[1] + (1 - l0 - l1) * V[2])
    return np.array(pts)


def interpolate_p1(mesh, u, pts) -> np.ndarray:
    """Values of the P1 function ``u`` at points inside the mesh."""
    p = mesh.nodes[mesh.triangles]
    out = np.full(len(pts), np.nan)
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    for k, x in enumerate(pts):
        l1 = ((x[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (x[1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
        l2 = ((b[:, 0] - a[:, 0]) * (x[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x[0] - a[:, 0])) / det
        l0 = 1 - l1 - l2
        inside = np.flatnonzero((l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12))
        if len(inside):
            t = inside[0]
            tri = mesh.triangles[t]
            out[k] = l0[t] * u[tri[0]] + l1[t] * u[tri[1]] + l2[t] * u[tri[2]]
    return out


def edge_means(mesh, u) -> np.ndarray:
    """Mean of the P1 trace over every polygon edge (length average)."""
    loop = mesh.boundary_loop
    nxt = np.roll(loop, -1)
    seg = np.linalg.norm(mesh.nodes[nxt] - mesh.nodes[loop], axis=1)
    E = int(mesh.edge_of_node.max()) + 1
    s = np.bincount(mesh.edge_of_node, weights=seg * 0.5 * (u[loop] + u[nxt]), minlength=E)
    return s / np.bincount(mesh.edge_of_node, weights=seg, minlength=E)


def cauchy_gap(mu: BoundaryMeasure, n: int, mesh_a, u_a, mesh_b, u_b, pts):
    """Trace and interior distances between level-``n`` and level-``n+1`` solutions.

    Traces are compared as functions of the level-``n`` arc address after
    averaging over each arc's polygon edges (``mu``-weighted); interior
    values are compared at sample points as a root-mean-square.
    """
    wa = mu.arc_masses(n)
    wb = mu.arc_masses(n + 1)
    ma = edge_means(mesh_a, u_a)
    mb = np.add.reduceat(wb * edge_means(mesh_b, u_b), np.arange(0, len(wb), 4)) / wa
    trace = math.sqrt(float(np.sum(wa * (ma - mb) ** 2)))
    ia, ib = interpolate_p1(mesh_a, u_a, pts), interpolate_p1(mesh_b, u_b, pts)
    interior = math.sqrt(float(np.mean((ia - ib) ** 2)))
    return trace, interior


def _systems(ctx: _Context, levels, lam):
    out = {}
    for n in levels:
        lvl, mun = ctx.level(n)
        mesh = triangulate(lvl, ctx.cfg.h_factor * float(lvl.edge_lengths.min()))
        out[n] = assemble_system(mesh, mun, ctx.spec(n), lam)
    return out


def _const_fn(c):
    return lambda x: np.full(len(x), float(c))


def elliptic_stability_study(cfg: StudyConfig, prob: EllipticProblem | None = None) -> StudyReport:
    """Solve the elliptic problem per level and report consecutive-level gaps.

    ``prob`` supplies ``lam``, the interior source ``f`` and the boundary
    source ``phi`` (globally defined); the default is ``lam = cfg.lam``,
    ``f = 1``, ``phi = 0``.
    """
    ctx = _Context(cfg)
    prob = EllipticProblem(cfg.lam, _const_fn(1.0), _const_fn(0.0)) if prob is None else prob
    levels = list(cfg.levels)
    systems = _systems(ctx, levels, prob.lam)
    sols = {n: solve_elliptic(s, prob) for n, s in systems.items()}
    pts = _sample_points(cfg.curve)
    rows, tg, ig = [], [], []
    for n in levels[:-1]:
        t, i = cauchy_gap(ctx.mu, n, systems[n].mesh, sols[n].u, systems[n + 1].mesh,
                          sols[n + 1].u, pts)
        tg.append(t)
        ig.append(i)
        rows.append(_row(n, "solution", "trace_gap", None, None, t))
        rows.append(_row(n, "solution", "interior_gap", None, None, i))
        rows.append(_row(n, "solution", "cauchy_gap", None, None, math.hypot(t, i)))
    for n in levels:
        rows.append(_row(n, "solution", "energy", sols[n].energy, None, None))
    cg_ = [math.hypot(a, b) for a, b in zip(tg, ig)]
    verdicts = {"cauchy_gap_decreasing": strictly_decreasing(cg_),
                "trace_gap_decreasing": strictly_decreasing(tg)}
    rates = {"cauchy_gap": decay_rate(levels[:-1], cg_), "trace_gap": decay_rate(levels[:-1], tg)}
    extra = {"residuals": {str(n): s.residual for n, s in sols.items()},
             "iterations": {str(n): s.iterations for n, s in sols.items()},
             "range": {str(n): [float(s.u.min()), float(s.u.max())] for n, s in sols.items()},
             "n_nodes": {str(n): int(systems[n].mesh.n_nodes) for n in levels}}
    return StudyReport("elliptic", rows, verdicts, rates, cfg.to_dict(), None, extra=extra)


def parabolic_stability_study(cfg: StudyConfig, prob: ParabolicProblem | None = None) -> StudyReport:
    """Implicit Euler per level.

    Reports consecutive-level gaps at the checkpoints, the change caused by
    halving the time step, and whether ``||u||_M`` decreases at every step.
    ``prob`` defaults to ``u0(x, y) = x`` with the config's ``lam``, ``dt``
    and checkpoints.
    """
    ctx = _Context(cfg)
    if prob is None:
        prob = ParabolicProblem(cfg.lam, lambda x: x[:, 0].copy(), cfg.dt,
                                max(cfg.checkpoints), tuple(cfg.checkpoints))
    half = replace(prob, dt=prob.dt / 2)
    levels = list(cfg.levels)
    systems = _systems(ctx, levels, prob.lam)
    trajs = {n: step_parabolic(s, prob) for n, s in systems.items()}
    halves = {n: step_parabolic(s, half) for n, s in systems.items()}
    pts = _sample_points(cfg.curve)
    rows, verdicts, rates, ratios = [], {}, {}, {}
    verdicts["norm_decreasing_every_step"] = all(
        bool(np.all(np.diff(tr.norms) <= 0)) for tr in trajs.values())
    for t in prob.checkpoints:
        tag = f"t={t:g}"
        gaps, sens = [], []
        for n in levels[:-1]:
            a, b = trajs[n].at(t), trajs[n + 1].at(t)
            tr, it = cauchy_gap(ctx.mu, n, systems[n].mesh, a, systems[n + 1].mesh, b, pts)
            gaps.append(math.hypot(tr, it))
            rows.append(_row(n, tag, "cauchy_gap", None, None, gaps[-1]))
        for n in levels:
            d = trajs[n].at(t) - halves[n].at(t)
            sens.append(math.sqrt(max(float(d @ (systems[n].M @ d)), 0.0)))
            rows.append(_row(n, tag, "step_halving", None, None, sens[-1]))
        verdicts[f"{tag}:cauchy_gap_decreasing"] = strictly_decreasing(gaps)
        verdicts[f"{tag}:step_halving_below_gap"] = all(s < g for s, g in zip(sens, gaps))
        ratios[tag] = [s / g if g > 0 else None for s, g in zip(sens, gaps)]
        rates[f"{tag}:cauchy_gap"] = decay_rate(levels[:-1], gaps)
    for n in levels:
        rows.append(_row(n, "trajectory", "final_norm", float(trajs[n].norms[-1]), None, None))
    rep = StudyReport("parabolic", rows, verdicts, rates, cfg.to_dict(), None,
                      extra={"step_halving_ratio": ratios, "dt": prob.dt})
    if any(r is not None and r >= 0.1 for v in ratios.values() for r in v):
        rep.flags.append("step halving above 10% of the level gap")
    return rep


def ks_strong_distance(points, values, L: float, mun: AveragedMeasure, candidate,
                       quad_order: int = 8) -> float:
    """``|| E(target)|_{Gamma_n} - candidate ||_{L^2(mu_n)}``.

    The target is Lipschitz data ``values`` at ``points``; ``E`` is the
    inf-convolution extension with constant ``L``; ``candidate`` is a
    callable on the polygon.
    """
    ext = lipschitz_extension(points, values, L, check=False)
    pts, w, eidx, _ = gauss_on_edges(mun.edges, quad_order)
    d = ext(pts) - np.asarray(candidate(pts), dtype=float)
    return math.sqrt(max(float(np.sum(w * mun.densities[eidx] * d * d)), 0.0))


STUDIES = {"energy": energy_study, "measure": measure_study,
           "superposition": superposition_study, "elliptic": elliptic_stability_study,
           "parabolic": parabolic_stability_study}

__all__ = ["StudyConfig", "StudyReport", "energy_study", "measure_study", "superposition_study",
           "elliptic_stability_study", "parabolic_stability_study", "ks_strong_distance",
           "domain_integral", "cauchy_gap", "interpolate_p1", "edge_means",
           "strictly_decreasing", "decay_rate", "STUDIES"]
