"""Convergence-study harness: error columns over uniform refinement levels.

Columns
-------
superconvergence : ||grad u - Q(grad I_h u)||_L2 against the analytic grad u
qh_l2, qh_h1     : L2 and H1 errors of u - Q u
fit_energy       : energy norm of successive-level fit differences
                   ||(u_h - u_{h/2}, sigma_h - sigma_{h/2})||_A

The fitting column compares consecutive levels because the continuous
minimizer has no closed form; its orders are therefore Richardson-style
self-referential estimates, which is reported as such by the CLI.
"""

import numpy as np
from dataclasses import dataclass, field

from .assembly import ScatteredData
from .elements import quadrature
from .fields import get_field
from .mesh import Domain, build_structured_mesh, refine_uniform
from .smoother import (
    FitConfig,
    energy_norm_difference,
    fit,
    lagrange_interpolate,
    quasi_project,
    quasi_project_gradient,
)
from .system import SolverConfig

ALL_COLUMNS = ("superconvergence", "qh_l2", "qh_h1", "fit_energy")
STUDY_QUAD_DEGREE = 7


@dataclass(frozen=True)
class StudyConfig:
    """Settings for one refinement study."""

    field: str
    domain: Domain
    levels: int
    base_cells: int = 8
    kind: str = "simplex"
    alpha: float = 1e-3
    n_data: int = 2000
    seed: int = 0
    columns: tuple = ALL_COLUMNS

    def __post_init__(self):
        if self.levels < 3:
            raise ValueError("need at least 3 levels to estimate orders")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        unknown = set(self.columns) - set(ALL_COLUMNS)
        if unknown:
            raise ValueError(f"unknown study columns: {sorted(unknown)}")


@dataclass
class StudyRow:
    level: int
    h: float
    errors: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)


def _quad_points(mesh, degree):
    rule = quadrature(mesh.cell_kind, degree)
    phys = mesh.element_origin[:, None, :] + np.einsum(
        "ekd,qd->eqk", mesh.jacobians, rule.points
    )
    wdet = rule.weights[None, :] * mesh.det_jacobians[:, None]
    return rule, phys, wdet


def _fe_at_quad(mesh, coeffs, rule):
    vals = mesh.element_pair.nodal_eval(rule.points)  # (q, nl)
    return np.einsum("qi,ei->eq", vals, np.asarray(coeffs)[mesh.elements])


def _fe_grad_at_quad(mesh, coeffs, rule):
    dphi = mesh.element_pair.nodal_grad(rule.points)
    g = np.einsum("qim,emk->eqik", dphi, mesh.inv_jacobians)
    return np.einsum("ei,eqik->eqk", np.asarray(coeffs)[mesh.elements], g)


def superconvergence_error(mesh, fld, degree=STUDY_QUAD_DEGREE):
    """L2 distance between the analytic gradient and the recovered
    gradient of the vertex interpolant."""
    iu = lagrange_interpolate(mesh, fld.value)
    rec = quasi_project_gradient(mesh, iu)
    rule, phys, wdet = _quad_points(mesh, degree)
    exact = np.asarray(fld.gradient(phys.reshape(-1, mesh.dim)))
    rec_at = np.stack(
        [_fe_at_quad(mesh, rec[k], rule).ravel() for k in range(mesh.dim)], axis=1
    )
    diff2 = ((exact - rec_at) ** 2).sum(axis=1).reshape(mesh.n_elements, -1)
    return float(np.sqrt(np.einsum("eq,eq->", wdet, diff2)))


def quasi_projection_errors(mesh, fld, degree=STUDY_QUAD_DEGREE):
    """(L2, H1) errors of the dual-moment projection of the field."""
    q = quasi_project(mesh, fld.value, degree=degree)
    rule, phys, wdet = _quad_points(mesh, degree)
    flat = phys.reshape(-1, mesh.dim)
    uvals = np.asarray(fld.value(flat)).reshape(mesh.n_elements, -1)
    qvals = _fe_at_quad(mesh, q, rule)
    l2sq = float(np.einsum("eq,eq->", wdet, (uvals - qvals) ** 2))
    gexact = np.asarray(fld.gradient(flat)).reshape(mesh.n_elements, -1, mesh.dim)
    gq = _fe_grad_at_quad(mesh, q, rule)
    h1sq = l2sq + float(np.einsum("eq,eq->", wdet, ((gexact - gq) ** 2).sum(axis=2)))
    return float(np.sqrt(l2sq)), float(np.sqrt(h1sq))


def sample_scattered(fld, domain, n, seed, noise=0.0):
    """Seeded uniform sites in the domain with field values (plus noise)."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(domain.lower, domain.upper, size=(n, domain.dim))
    vals = np.asarray(fld.value(pts), dtype=float)
    if noise > 0:
        vals = vals + rng.normal(0.0, noise, size=n)
    return ScatteredData(pts, vals)


def estimate_orders(errors):
    """log2 ratios of consecutive errors; None where undefined."""
    orders = [None]
    for a, b in zip(errors, errors[1:]):
        if a is None or b is None or a <= 0 or b <= 0:
            orders.append(None)
        else:
            orders.append(float(np.log2(a / b)))
    return orders


def ls_order(hs, errors):
    """Least-squares slope of log(error) against log(h)."""
    pairs = [(h, e) for h, e in zip(hs, errors) if e is not None and e > 0]
    if len(pairs) < 2:
        return None
    hs, es = zip(*pairs)
    return float(np.polyfit(np.log(np.array(hs)), np.log(np.array(es)), 1)[0])


def run_study(config, solver=None, on_row=None):
    """Run every requested column across refinement levels.

    Returns the row list; `on_row(row)` fires as each level completes so a
    caller can flush partial output if a later level fails.
    """
    fld = get_field(config.field, config.domain.dim)
    meshes = []
    mesh = build_structured_mesh(
        config.domain, (config.base_cells,) * config.domain.dim, config.kind
    )
    for _ in range(config.levels):
        meshes.append(mesh)
        mesh = refine_uniform(mesh)

    want_fit = "fit_energy" in config.columns
    data = None
    if want_fit:
        data = sample_scattered(fld, config.domain, config.n_data, config.seed)
    solver = solver or SolverConfig()

    rows = [StudyRow(level=i, h=m.h) for i, m in enumerate(meshes)]
    smoothers = []
    for i, m in enumerate(meshes):
        row = rows[i]
        if "superconvergence" in config.columns:
            row.errors["superconvergence"] = superconvergence_error(m, fld)
        if "qh_l2" in config.columns or "qh_h1" in config.columns:
            l2, h1 = quasi_projection_errors(m, fld)
            if "qh_l2" in config.columns:
                row.errors["qh_l2"] = l2
            if "qh_h1" in config.columns:
                row.errors["qh_h1"] = h1
        if want_fit:
            smoothers.append(fit(data, m, FitConfig(config.alpha), solver=solver))
            if i > 0:
                row.errors["fit_energy"] = energy_norm_difference(
                    smoothers[i - 1], smoothers[i], data.points, config.alpha
                )
        _fill_orders(rows[: i + 1], config.columns)
        if on_row is not None:
            on_row(row)
    return rows


def _fill_orders(rows, columns):
    for col in columns:
        errs = [r.errors.get(col) for r in rows]
        orders = estimate_orders(errs)
        for r, o in zip(rows, orders):
            if col in r.errors:
                r.orders[col] = o
