"""
Error norms, convergence rates, manufactured problems and the refinement study.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .coupling import _gauss_on_segments, merge_partitions
from .fem import evaluate_p1, nodal_interpolate
from .problem import Discretization, ProblemSpec, discretize
from .quadrature import gauss_triangle
from .system import MethodParams, SolverFailure, build_saddle_system, solve

__all__ = [
    "ProblemSpec", "ConvergenceReport", "manufactured_problem", "linear_problem",
    "error_l2_domain", "error_h1_broken", "error_l2_interface", "eoc",
    "run_convergence_study", "check_source",
]

PI = np.pi
SOLVER_RTOL = 1e-8


def manufactured_problem(beta1: float, beta2: float) -> ProblemSpec:
    """Exact solution ``u = sin^2(pi x) sin^2(pi y)`` with ``a = 0`` and ``g = 0``.

    ``du/dx`` vanishes on ``x = 1/2``, so the exact multiplier is zero for
    any coefficient pair.
    """
    def u(x, y):
        return np.sin(PI * x) ** 2 * np.sin(PI * y) ** 2

    def grad(x, y):
        return (PI * np.sin(2 * PI * x) * np.sin(PI * y) ** 2,
                PI * np.sin(PI * x) ** 2 * np.sin(2 * PI * y))

    def source(beta):
        def f(x, y):
            return -beta * 2 * PI ** 2 * (np.cos(2 * PI * x) * np.sin(PI * y) ** 2
                                          + np.sin(PI * x) ** 2 * np.cos(2 * PI * y))
        return f

    return ProblemSpec(
        beta1=beta1, beta2=beta2, f1=source(beta1), f2=source(beta2),
        u=(u, u), grad_u=(grad, grad), lam=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
    )


def linear_problem(beta: float = 1.0) -> ProblemSpec:
    """``u = x`` with matching coefficients; the flux across ``x = 1/2`` is ``beta``."""
    def u(x, y):
        return np.asarray(x, dtype=float) + 0.0 * np.asarray(y)

    def grad(x, y):
        ones = np.ones(np.broadcast(x, y).shape)
        return ones, 0.0 * ones

    zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)  # noqa: E731
    return ProblemSpec(beta1=beta, beta2=beta, f1=zero, f2=zero, g=u, u=(u, u),
                       grad_u=(grad, grad),
                       lam=lambda s: np.full(np.shape(s), float(beta)))


def check_source(problem: ProblemSpec, points, step: float = 1e-4) -> float:
    """Max relative mismatch between ``f`` and ``-div(beta grad u) + a u`` by central differences."""
    worst = 0.0
    for side in (1, 2):
        u = problem.u[side - 1]
        beta, a = problem.beta(side), problem.a(side)
        for x, y in points:
            lap = (u(x + step, y) + u(x - step, y) + u(x, y + step) + u(x, y - step)
                   - 4 * u(x, y)) / step ** 2
            expected = -beta * lap + a * u(x, y)
            got = problem.f(side)(x, y)
            scale = max(abs(got), abs(expected), beta)
            worst = max(worst, abs(got - expected) / scale)
    return worst


def _integrate_error(space, coeffs, u, grad_u=None, rule=None):
    rule = rule or gauss_triangle(4)
    pts, wts, vals, grad = evaluate_p1(space, coeffs, rule)
    X, Y = pts[..., 0], pts[..., 1]
    l2 = np.sum(wts * (u(X, Y) - vals) ** 2)
    if grad_u is None:
        return l2, 0.0
    ux, uy = grad_u(X, Y)
    semi = np.sum(wts * ((ux - grad[:, None, 0]) ** 2 + (uy - grad[:, None, 1]) ** 2))
    return l2, semi


def error_l2_domain(solution, u, spaces) -> float:
    """``||u - u_h||_{L2(Omega)}`` summed over subdomains.

    ``solution`` is a pair of full vertex vectors (or a :class:`Solution`),
    ``u`` a pair of exact fields, ``spaces`` the matching pair of spaces.
    """
    coeffs = (solution.u1, solution.u2) if hasattr(solution, "u1") else solution
    total = sum(_integrate_error(sp_, c, ui)[0] for sp_, c, ui in zip(spaces, coeffs, u))
    return math.sqrt(total)


def error_h1_broken(solution, u, grad_u, spaces) -> float:
    """Broken H1 norm of the error: L2 plus gradient terms on each subdomain."""
    coeffs = (solution.u1, solution.u2) if hasattr(solution, "u1") else solution
    total = 0.0
    for sp_, c, ui, gi in zip(spaces, coeffs, u, grad_u):
        l2, semi = _integrate_error(sp_, c, ui, gi)
        total += l2 + semi
    return math.sqrt(total)


def error_l2_interface(lam_coeffs, lam_exact, mult) -> float:
    """``||lambda - lambda_h||_{L2(Gamma)}`` with two Gauss points per multiplier segment."""
    merged = merge_partitions(mult.trace, mult.trace)
    s, w = _gauss_on_segments(merged, 2)
    diff = np.asarray(lam_exact(s), dtype=float) - mult.evaluate(lam_coeffs, s)
    return math.sqrt(float(np.sum(w * diff ** 2)))


def eoc(errors, hs) -> np.ndarray:
    """Empirical orders ``log(e_k / e_{k+1}) / log(h_k / h_{k+1})``."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape or e.ndim != 1 or len(e) < 2:
        raise ValueError("errors and hs must be 1D sequences of equal length >= 2")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


CSV_COLUMNS = ("h1", "h2", "h", "e_u_l2", "e_u_h1", "e_lambda_l2", "p", "q")


@dataclass
class ConvergenceReport:
    """Rows of ``(h1, h2, h, e_u_l2, e_u_h1, e_lambda_l2, p, q)``; ``p``/``q`` are None on row 0."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    residuals: list = field(default_factory=list)
    timings: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        k = CSV_COLUMNS.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    @property
    def p(self) -> np.ndarray:
        return self.column("p")[1:]

    @property
    def q(self) -> np.ndarray:
        return self.column("q")[1:]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(["" if v is None else repr(float(v)) for v in row])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = ["| " + " | ".join(CSV_COLUMNS) + " |",
                 "|" + "---|" * len(CSV_COLUMNS)]
        for h1, h2, h, eu, eh1, el, p, q in self.rows:
            cells = [_frac(h1), _frac(h2), _frac(h), f"{eu:.5g}", f"{eh1:.5g}", f"{el:.5g}",
                     "" if p is None else f"{p:.4f}", "" if q is None else f"{q:.4f}"]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def _frac(h: float) -> str:
    n = round(1.0 / h)
    return f"1/{n}" if abs(1.0 / n - h) < 1e-12 else f"{h:.6g}"


def default_levels(count: int = 5, base=(0.25, 1.0 / 6.0)) -> list[tuple[float, float]]:
    """Mesh pairs ``base * 2**-k``, ``k = 0 .. count-1``."""
    return [(base[0] / 2 ** k, base[1] / 2 ** k) for k in range(count)]


def solve_level(problem: ProblemSpec, params: MethodParams, h1: float, h2: float,
                diagonal: str = "NE", endpoint_dofs: bool = False):
    disc = discretize(h1, h2, diagonal, endpoint_dofs)
    system = build_saddle_system(problem, params, disc)
    return disc, solve(system, rtol=SOLVER_RTOL)


def level_errors(problem: ProblemSpec, disc: Discretization, solution) -> tuple[float, float, float]:
    spaces = (disc.space1, disc.space2)
    e_u = error_l2_domain(solution, problem.u, spaces)
    e_h1 = error_h1_broken(solution, problem.u, problem.grad_u, spaces)
    e_lam = error_l2_interface(solution.lam, problem.lam, disc.mult)
    return e_u, e_h1, e_lam


def run_convergence_study(config, problem: ProblemSpec | None = None) -> ConvergenceReport:
    """Solve the manufactured problem on each mesh pair of ``config.levels``.

    ``config`` is a :class:`~nitsche_mortar.config.StudyConfig`.
    """
    if problem is None:
        problem = manufactured_problem(config.beta1, config.beta2)
        if config.a1 or config.a2:
            problem = _with_reaction(problem, config.a1, config.a2)
    params = MethodParams(S=config.S, gamma0=config.gamma0, local_gamma=config.local_gamma,
                          average=config.average, beta_scaled=config.beta_scaled)
    report = ConvergenceReport(metadata={
        "beta1": config.beta1, "beta2": config.beta2, "S": config.S,
        "gamma0": config.gamma0, "diagonal": config.diagonal,
        "endpoint_dofs": config.endpoint_dofs,
    })
    errors = []
    for k, (h1, h2) in enumerate(config.levels):
        start = time.perf_counter()
        try:
            disc, sol = solve_level(problem, params, h1, h2, config.diagonal, config.endpoint_dofs)
        except SolverFailure as exc:
            raise SolverFailure(f"level {k} (h1={h1:g}, h2={h2:g}): {exc}") from exc
        errors.append((h1, h2, max(h1, h2)) + level_errors(problem, disc, sol))
        report.residuals.append(sol.residual)
        report.timings.append(time.perf_counter() - start)

    hs = [e[2] for e in errors]
    p = eoc([e[3] for e in errors], hs) if len(errors) > 1 else []
    q = eoc([e[5] for e in errors], hs) if len(errors) > 1 else []
    for k, e in enumerate(errors):
        report.rows.append(e + ((None, None) if k == 0 else (float(p[k - 1]), float(q[k - 1]))))
    return report


def _with_reaction(problem: ProblemSpec, a1: float, a2: float) -> ProblemSpec:
    def shifted(f, a, u):
        return lambda x, y: f(x, y) + a * u(x, y)

    u1, u2 = problem.u
    return ProblemSpec(
        beta1=problem.beta1, beta2=problem.beta2,
        f1=shifted(problem.f1, a1, u1), f2=shifted(problem.f2, a2, u2),
        a1=a1, a2=a2, g=problem.g, u=problem.u, grad_u=problem.grad_u, lam=problem.lam,
    )


def interpolation_errors(u, grad_u, space) -> tuple[float, float]:
    """L2 and H1 errors of the nodal interpolant of ``u`` on one space."""
    coeffs = nodal_interpolate(space, u)
    l2, semi = _integrate_error(space, coeffs, u, grad_u)
    return math.sqrt(l2), math.sqrt(l2 + semi)

