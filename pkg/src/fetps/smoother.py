"""High-level fitting API, quasi-projection, interpolation, and norms.

`fit` composes assembly, static condensation, the CG solve and recovery into
a `Smoother` that can be evaluated (with its recovered gradient) anywhere in
the domain. The quasi-projection uses the biorthogonal dual basis:

    (Q v)_i = (int mu_i v) / c_i,

which restricts to the identity on the finite element space and acts as a
local gradient-recovery operator when applied to broken gradients.
"""

import json
from dataclasses import dataclass

import numpy as np

from .assembly import assemble_gram_diagonal, assemble_system
from .elements import quadrature
from .errors import DataFormatError, SingularSystemError
from .mesh import locate_points, mesh_from_dict, mesh_to_dict
from .system import SolverConfig, condense, recover_auxiliary, solve_reduced

SMOOTHER_FORMAT = "fetps-smoother"
SMOOTHER_VERSION = 1


@dataclass(frozen=True)
class FitConfig:
    """Smoothing weight for the curvature penalty."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


class Smoother:
    """Fitted smoothing spline: coefficients plus recovered gradient field.

    `u` holds vertex coefficients of the smoother, `sigma` the recovered
    (continuous) gradient components, `phi` the Lagrange multiplier
    components. Instances are immutable and safe for concurrent evaluation.
    """

    def __init__(self, mesh, u, sigma, phi, alpha, iterations=0, residual=0.0,
                 blocks=None, reduced=None):
        self.mesh = mesh
        self.u = np.asarray(u, dtype=float).copy()
        self.sigma = np.asarray(sigma, dtype=float).copy()
        self.phi = np.asarray(phi, dtype=float).copy()
        self.alpha = float(alpha)
        self.iterations = int(iterations)
        self.residual = float(residual)
        self.blocks = blocks
        self.reduced = reduced
        for arr in (self.u, self.sigma, self.phi):
            arr.setflags(write=False)

    def evaluate(self, points):
        """Smoother values u_h(x) at arbitrary in-domain points."""
        return fe_value(self.mesh, self.u, points)

    def evaluate_gradient(self, points):
        """Recovered gradient sigma_h(x): continuous across element faces."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        eids, refs = locate_points(self.mesh, pts)
        vals = self.mesh.element_pair.nodal_eval(refs)
        conn = self.mesh.elements[eids]
        return np.stack(
            [(vals * self.sigma[k][conn]).sum(axis=1) for k in range(self.mesh.dim)],
            axis=1,
        )

    def evaluate_raw_gradient(self, points):
        """Broken elementwise gradient of u_h (differs from sigma_h)."""
        return fe_gradient(self.mesh, self.u, points)

    def to_dict(self):
        return {
            "format": SMOOTHER_FORMAT,
            "version": SMOOTHER_VERSION,
            "alpha": self.alpha,
            "mesh": mesh_to_dict(self.mesh),
            "u": self.u.tolist(),
            "sigma": self.sigma.tolist(),
            "phi": self.phi.tolist(),
            "diagnostics": {"iterations": self.iterations, "residual": self.residual},
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def from_dict(cls, data):
        try:
            if data.get("format") != SMOOTHER_FORMAT:
                raise DataFormatError(
                    f"not a smoother file (format={data.get('format')!r})"
                )
            if int(data["version"]) > SMOOTHER_VERSION:
                raise DataFormatError(f"unsupported smoother version {data['version']}")
            mesh = mesh_from_dict(data["mesh"])
            diag = data.get("diagnostics", {})
            return cls(
                mesh=mesh,
                u=np.asarray(data["u"], dtype=float),
                sigma=np.asarray(data["sigma"], dtype=float),
                phi=np.asarray(data["phi"], dtype=float),
                alpha=float(data["alpha"]),
                iterations=diag.get("iterations", 0),
                residual=diag.get("residual", 0.0),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataFormatError):
                raise
            raise DataFormatError(f"invalid smoother description: {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid smoother JSON: {exc}") from exc
        return cls.from_dict(data)


def fit(data, mesh, cfg, solver=None, keep_system=True):
    """Fit the smoothing spline to scattered data on a mesh.

    Parameters
    ----------
    data : ScatteredData
        Needs d+1 affinely independent sites inside the closed domain.
    mesh : Mesh
    cfg : FitConfig
    solver : SolverConfig, optional
    keep_system : bool
        Keep assembled blocks on the returned smoother (cheap, and makes
        functional evaluations reuse them).
    """
    if not isinstance(cfg, FitConfig):
        cfg = FitConfig(alpha=float(cfg))
    if not data.admissible():
        raise SingularSystemError(
            f"scattered data is not admissible: need at least {mesh.dim + 1} "
            f"affinely independent points, got affine rank {data.affine_rank()} "
            f"from {data.n} points"
        )
    blocks = assemble_system(mesh, data)
    op = condense(blocks, cfg.alpha)
    u, stats = solve_reduced(op, blocks.f, solver, return_stats=True)
    triple = recover_auxiliary(blocks, u, cfg.alpha)
    return Smoother(
        mesh=mesh,
        u=triple.u,
        sigma=triple.sigma,
        phi=triple.phi,
        alpha=cfg.alpha,
        iterations=stats["iterations"],
        residual=stats["residual"],
        blocks=blocks if keep_system else None,
        reduced=op if keep_system else None,
    )


# -- finite element field evaluation ---------------------------------------

def fe_value(mesh, coeffs, points):
    """Evaluate the FE function with the given vertex coefficients."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    eids, refs = locate_points(mesh, pts)
    vals = mesh.element_pair.nodal_eval(refs)
    conn = mesh.elements[eids]
    return (vals * np.asarray(coeffs)[conn]).sum(axis=1)


def fe_gradient(mesh, coeffs, points):
    """Broken elementwise gradient of the FE function at given points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    eids, refs = locate_points(mesh, pts)
    return fe_gradient_on_elements(mesh, coeffs, eids, refs)


def fe_value_on_element(mesh, coeffs, eid, points):
    """Evaluate the FE function restricted to one element (closure included)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    eids = np.full(len(pts), eid, dtype=np.int64)
    refs = mesh.map_to_reference(eids, pts)
    vals = mesh.element_pair.nodal_eval(refs)
    return (vals * np.asarray(coeffs)[mesh.elements[eids]]).sum(axis=1)


def fe_gradient_on_elements(mesh, coeffs, eids, refs):
    grads = mesh.element_pair.nodal_grad(np.atleast_2d(refs))  # (m, nl, dref)
    # physical gradient: invJ^T action
    phys = np.einsum("mik,mkd->mid", grads, mesh.inv_jacobians[eids])
    local = np.asarray(coeffs)[mesh.elements[eids]]  # (m, nl)
    return np.einsum("mi,mid->md", local, phys)


# -- quasi-projection and interpolation -------------------------------------

def quasi_project(mesh, v, degree=5):
    """Coefficients of the dual-moment projection of a scalar field.

    Coefficient i equals (int mu_i v) / c_i; fields already in the FE space
    are reproduced exactly up to quadrature. `v` maps an (m, d) array of
    points to m values.
    """
    pair = mesh.element_pair
    rule = quadrature(mesh.cell_kind, degree)
    mu = pair.dual_eval(rule.points)  # (q, nl)
    # physical quadrature points for every element
    phys = mesh.element_origin[:, None, :] + np.einsum(
        "ekd,qd->eqk", mesh.jacobians, rule.points
    )
    vals = np.asarray(v(phys.reshape(-1, mesh.dim)), dtype=float).reshape(
        mesh.n_elements, -1
    )
    wdet = rule.weights[None, :] * mesh.det_jacobians[:, None]
    local = np.einsum("eq,eq,qi->ei", wdet, vals, mu)
    moments = np.zeros(mesh.n_vertices)
    np.add.at(moments, mesh.elements.ravel(), local.ravel())
    c = assemble_gram_diagonal(mesh)
    return moments / c


def quasi_project_gradient(mesh, coeffs, degree=2):
    """Recovered-gradient coefficients of an FE function: Q applied to grad.

    Returns a (d, n) array; row k holds the dual moments of d_k u_h scaled
    by 1/c. Exact for the piecewise-polynomial integrand at degree 2.
    """
    pair = mesh.element_pair
    rule = quadrature(mesh.cell_kind, degree)
    mu = pair.dual_eval(rule.points)
    dphi = pair.nodal_grad(rule.points)
    grad = np.einsum("qim,emk->eqik", dphi, mesh.inv_jacobians)
    local_coeffs = np.asarray(coeffs)[mesh.elements]  # (e, nl)
    gu = np.einsum("ei,eqik->eqk", local_coeffs, grad)  # grad u at quad pts
    wdet = rule.weights[None, :] * mesh.det_jacobians[:, None]
    c = assemble_gram_diagonal(mesh)
    out = np.zeros((mesh.dim, mesh.n_vertices))
    for k in range(mesh.dim):
        local = np.einsum("eq,eq,qi->ei", wdet, gu[:, :, k], mu)
        np.add.at(out[k], mesh.elements.ravel(), local.ravel())
        out[k] /= c
    return out


def lagrange_interpolate(mesh, v):
    """Vertex interpolant coefficients: coefficient j = v(vertex_j)."""
    return np.asarray(v(mesh.vertices), dtype=float).ravel()


# -- norms and functionals ---------------------------------------------------

def integrate(mesh, func, degree=5):
    """Integrate a pointwise field over the mesh by elementwise quadrature."""
    rule = quadrature(mesh.cell_kind, degree)
    phys = mesh.element_origin[:, None, :] + np.einsum(
        "ekd,qd->eqk", mesh.jacobians, rule.points
    )
    vals = np.asarray(func(phys.reshape(-1, mesh.dim)), dtype=float).reshape(
        mesh.n_elements, -1
    )
    wdet = rule.weights[None, :] * mesh.det_jacobians[:, None]
    return float(np.einsum("eq,eq->", wdet, vals))


def l2_norm(mesh, func, degree=5):
    """L2 norm of a scalar or vector pointwise field."""
    def sq(pts):
        v = np.asarray(func(pts), dtype=float)
        if v.ndim == 1:
            return v ** 2
        return (v ** 2).sum(axis=1)
    return float(np.sqrt(max(integrate(mesh, sq, degree), 0.0)))


def energy_norm(mesh, data_points, alpha, u, grad_u, sigma, jac_sigma, degree=5):
    """Energy norm of a (u, sigma) pair against given data sites.

    sqrt( sum_i u(x_i)^2 + alpha * |sigma|_{H1}^2 + ||sigma - grad u||_{L2}^2 )

    with the H1 seminorm integrated elementwise. `u` maps points to values,
    `grad_u` and `sigma` map points to (m, d), `jac_sigma` maps points to
    (m, d, d) component derivatives.
    """
    data_points = np.atleast_2d(np.asarray(data_points, dtype=float))
    pterm = float(np.sum(np.asarray(u(data_points), dtype=float) ** 2))

    def h1_density(pts):
        jac = np.asarray(jac_sigma(pts), dtype=float)
        return (jac ** 2).sum(axis=(1, 2))

    def constraint_density(pts):
        diff = np.asarray(sigma(pts), dtype=float) - np.asarray(grad_u(pts), dtype=float)
        return (diff ** 2).sum(axis=1)

    h1 = integrate(mesh, h1_density, degree)
    cons = integrate(mesh, constraint_density, degree)
    return float(np.sqrt(max(pterm + alpha * h1 + cons, 0.0)))


def smoother_pair_fields(s):
    """The four field callables of a fitted smoother for energy_norm."""
    def u(pts):
        return s.evaluate(pts)

    def grad_u(pts):
        return s.evaluate_raw_gradient(pts)

    def sigma(pts):
        return s.evaluate_gradient(pts)

    def jac_sigma(pts):
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        eids, refs = locate_points(s.mesh, p)
        rows = [
            fe_gradient_on_elements(s.mesh, s.sigma[k], eids, refs)
            for k in range(s.mesh.dim)
        ]
        return np.stack(rows, axis=1)  # (m, d, d): row k = grad sigma_k

    return u, grad_u, sigma, jac_sigma


def energy_norm_difference(s_coarse, s_fine, data_points, alpha, degree=2):
    """Energy norm of the pairwise difference of two fitted smoothers.

    Quadrature runs on the finer mesh; with nested structured meshes the
    integrands are piecewise polynomial there, so low degree is exact.
    """
    uc, guc, sc, jc = smoother_pair_fields(s_coarse)
    uf, guf, sf, jf = smoother_pair_fields(s_fine)
    fine_mesh = s_fine.mesh if s_fine.mesh.h <= s_coarse.mesh.h else s_coarse.mesh
    return energy_norm(
        fine_mesh,
        data_points,
        alpha,
        lambda p: uc(p) - uf(p),
        lambda p: guc(p) - guf(p),
        lambda p: sc(p) - sf(p),
        lambda p: jc(p) - jf(p),
        degree=degree,
    )


def functional_value(s, data, coeffs=None):
    """Discrete objective J(v) = v^T S v - 2 f^T v for the fitted system.

    Defaults to the smoother's own coefficients; at the minimizer the energy
    identity J(u) = -f^T u = -||u||_P^2 holds. Pass `coeffs` to probe
    perturbations. The data must be the set the smoother was fitted to.
    """
    if s.blocks is None or s.reduced is None:
        blocks = assemble_system(s.mesh, data)
        reduced = condense(blocks, s.alpha)
    else:
        blocks, reduced = s.blocks, s.reduced
    v = s.u if coeffs is None else np.asarray(coeffs, dtype=float).ravel()
    return float(v @ (reduced.matrix @ v) - 2.0 * (blocks.f @ v))
