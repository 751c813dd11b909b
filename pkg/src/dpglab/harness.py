"""Convergence-study driver: error integration, rates, table emission.

A study starts from the initial criss-cross mesh, solves on a sequence of
uniformly refined meshes and collects four L2 errors per level:

* ``err_u``:    |u - u_h|          (degree-p solve)
* ``err_proj``: |P^p u - u_h|      (distance to the elementwise L2 projection)
* ``err_aug``:  |u - u_h^+|        (degree p+1 scalar field, separate solve)
* ``err_post``: |u - u_tilde|      (local Neumann postprocessing, degree p+1)

Rates are log2 of consecutive error quotients.  Error quadrature is chosen
independently of the assembly quadrature (exactness 2*degree + 6) so that
error measurement cannot inherit an assembly shortcut.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dpg_solver import assemble_and_solve, error_function
from .forms import TestNorm
from .mesh import Mesh, build_initial_mesh, refine_uniform
from .postprocess import postprocess_u
from .problems import ProblemSpec, example, seam_clearance
from .refelem import scalar_basis, triangle_quadrature
from .spaces import CoefficientVector, l2_project

CSV_HEADER = "p,nT,err_u,rate_u,err_proj,rate_proj,err_aug,rate_aug,err_post,rate_post"


def fmt_err(v: Optional[float]) -> str:
    """Scientific notation with 3 significant digits, '---' when absent."""
    return "---" if v is None else f"{v:.2e}"


def fmt_rate(v: Optional[float]) -> str:
    return "---" if v is None else f"{v:.2f}"


def l2_error(mesh: Mesh, approx: CoefficientVector, exact,
             exactness: int | None = None) -> float:
    """L2 distance between a broken polynomial field and a callable."""
    deg = approx.degree
    rule = triangle_quadrature(2 * deg + 6 if exactness is None else exactness)
    psi = scalar_basis(deg).eval(rule.points)
    X = np.einsum("ecd,qd->eqc", mesh.jacobians, rule.points) + mesh.shifts[:, None, :]
    vals = np.asarray(exact(X.reshape(-1, 2))).reshape(mesh.n_triangles, -1)
    diff = vals - (approx.by_element() @ psi.T) / np.sqrt(mesh.dets)[:, None]
    err2 = np.einsum("q,eq,e->", rule.weights, diff * diff, mesh.dets)
    return float(np.sqrt(err2))


def rate(e_prev: float, e_cur: float) -> Optional[float]:
    """log2(e_prev / e_cur); None when either value is not positive."""
    if e_prev is None or e_cur is None or e_prev <= 0 or e_cur <= 0:
        return None
    return float(np.log2(e_prev / e_cur))


@dataclass(frozen=True)
class StudyConfig:
    example: int
    norm: TestNorm
    p: int
    levels: int
    variant: str = "both"  # standard | augmented | both
    k1: int | None = None
    k2: int | None = None
    quad_exactness: int | None = None
    solver_tol: float = 1e-12
    fmt: str = "csv"
    track_energy: bool = False

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("a study needs at least 2 levels")
        if self.variant not in ("standard", "augmented", "both"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.fmt not in ("csv", "markdown"):
            raise ValueError(f"unknown output format {self.fmt!r}")
        if isinstance(self.norm, str):
            object.__setattr__(self, "norm", TestNorm.from_name(self.norm))


@dataclass
class ErrorRow:
    level: int
    n_triangles: int
    err_u: float | None = None
    err_proj: float | None = None
    err_aug: float | None = None
    err_post: float | None = None
    err_best: float | None = None  # |u - P^p u|, not emitted
    energy: float | None = None  # |eps|_V, not emitted

    def errors(self):
        return (self.err_u, self.err_proj, self.err_aug, self.err_post)


@dataclass
class ErrorTable:
    p: int
    rows: list[ErrorRow] = field(default_factory=list)
    config: StudyConfig | None = None
    # parsed tables keep their printed rates instead of recomputing them
    # from print-rounded errors
    rates_override: list[tuple[Optional[float], ...]] | None = None

    def rates(self) -> list[tuple[Optional[float], ...]]:
        if self.rates_override is not None:
            return self.rates_override
        out = []
        prev = None
        for row in self.rows:
            if prev is None:
                out.append((None,) * 4)
            else:
                out.append(tuple(rate(a, b) for a, b in zip(prev.errors(), row.errors())))
            prev = row
        return out

    def final_rates(self) -> tuple[Optional[float], ...]:
        return self.rates()[-1]

    def energy_rates(self) -> list[Optional[float]]:
        out, prev = [], None
        for row in self.rows:
            out.append(rate(prev, row.energy))
            prev = row.energy
        return out


def run_convergence_study(config: StudyConfig, progress=None) -> ErrorTable:
    """Solve on ``config.levels`` uniformly refined meshes and tabulate."""
    problem = example(config.example)
    mesh = build_initial_mesh()
    do_std = config.variant in ("standard", "both")
    do_aug = config.variant in ("augmented", "both")
    p = config.p
    table = ErrorTable(p=p, config=config)
    solve_kw = dict(k1=config.k1, k2=config.k2, solver_tol=config.solver_tol,
                    volume_exactness=config.quad_exactness)

    for level in range(1, config.levels + 1):
        if progress:
            progress(f"level {level}: #T={mesh.n_triangles}")
        check_problem_alignment(problem, mesh, p)
        row = ErrorRow(level=level, n_triangles=mesh.n_triangles)
        try:
            if do_std:
                sol = assemble_and_solve(mesh, problem, p, config.norm,
                                         variant="standard", **solve_kw)
                row.err_u = l2_error(mesh, sol.u, problem.u)
                proj = l2_project(mesh, p, problem.u)
                row.err_proj = float(np.linalg.norm(proj.data - sol.u.data))
                row.err_best = l2_error(mesh, proj, problem.u)
                post = postprocess_u(mesh, problem, sol)
                row.err_post = l2_error(mesh, post, problem.u)
                if config.track_energy:
                    row.energy = error_function(mesh, problem, sol).total
            if do_aug:
                sol_aug = assemble_and_solve(mesh, problem, p, config.norm,
                                             variant="augmented", **solve_kw)
                row.err_aug = l2_error(mesh, sol_aug.u, problem.u)
        except Exception as exc:
            raise type(exc)(f"level {level} (#T={mesh.n_triangles}): {exc}") from exc
        table.rows.append(row)
        if level < config.levels:
            mesh = refine_uniform(mesh)
    return table


def check_problem_alignment(problem: ProblemSpec, mesh: Mesh, p: int,
                            min_clearance: float = 1e-12) -> None:
    """Guard against quadrature nodes on coefficient jump lines."""
    rule = triangle_quadrature(2 * (p + 3) + 4)
    if seam_clearance(problem, mesh, rule) <= min_clearance:
        raise ValueError(
            f"quadrature nodes of {problem.name} fall on a coefficient jump line")


def emit_table(table: ErrorTable, fmt: str = "csv") -> str:
    if fmt == "csv":
        return _emit_csv(table)
    if fmt == "markdown":
        return _emit_markdown(table)
    raise ValueError(f"unknown output format {fmt!r}")


def _emit_csv(table: ErrorTable) -> str:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for row, rates in zip(table.rows, table.rates()):
        cells = [str(table.p), str(row.n_triangles)]
        for err, rt in zip(row.errors(), rates):
            cells.append(fmt_err(err))
            cells.append(fmt_rate(rt))
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def _emit_markdown(table: ErrorTable) -> str:
    head = ["p", "#T", "err_u", "rate", "err_proj", "rate",
            "err_aug", "rate", "err_post", "rate"]
    lines = ["| " + " | ".join(head) + " |",
             "|" + "|".join(["---"] * len(head)) + "|"]
    for row, rates in zip(table.rows, table.rates()):
        cells = [str(table.p), str(row.n_triangles)]
        for err, rt in zip(row.errors(), rates):
            cells.append(fmt_err(err))
            cells.append(fmt_rate(rt))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def parse_table_csv(text: str) -> ErrorTable:
    """Inverse of the CSV emitter at printed precision."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("not a study CSV: bad header")
    table = ErrorTable(p=0, rates_override=[])
    for k, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != 10:
            raise ValueError(f"bad CSV row: {line!r}")
        table.p = int(cells[0])

        def num(s):
            return None if s == "---" else float(s)

        table.rows.append(ErrorRow(
            level=k + 1, n_triangles=int(cells[1]), err_u=num(cells[2]),
            err_proj=num(cells[4]), err_aug=num(cells[6]), err_post=num(cells[8])))
        table.rates_override.append(tuple(num(cells[c]) for c in (3, 5, 7, 9)))
    return table
