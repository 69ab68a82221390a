import numpy as np
import pytest

from fetps.elements import quadrature
from fetps.mesh import Domain, build_structured_mesh


@pytest.fixture
def unit_square():
    return Domain(np.array([0.0, 0.0]), np.array([1.0, 1.0]))


@pytest.fixture
def unit_cube():
    return Domain(np.zeros(3), np.ones(3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def make_mesh(domain, cells, kind):
    return build_structured_mesh(domain, cells, kind)


def brute_force_matrix(mesh, kernel, degree=4):
    """Dense assembly oracle: direct quadrature, plain Python element loop.

    kernel(i, j, xq, phi, grad, mu) -> integrand values at the quadrature
    points of one element, for local trial j and test i.
    """
    pair = mesh.element_pair
    rule = quadrature(mesh.cell_kind, degree)
    n = mesh.n_vertices
    out = np.zeros((n, n))
    phi = pair.nodal_eval(rule.points)
    dphi = pair.nodal_grad(rule.points)
    mu = pair.dual_eval(rule.points)
    for e in range(mesh.n_elements):
        det = mesh.det_jacobians[e]
        invj = mesh.inv_jacobians[e]
        xq = mesh.element_origin[e] + rule.points @ mesh.jacobians[e].T
        grad = np.einsum("qim,mk->qik", dphi, invj)
        conn = mesh.elements[e]
        for i in range(pair.n_loc):
            for j in range(pair.n_loc):
                vals = kernel(i, j, xq, phi, grad, mu)
                out[conn[i], conn[j]] += det * float(rule.weights @ vals)
    return out


def stiffness_kernel(i, j, xq, phi, grad, mu):
    return (grad[:, i, :] * grad[:, j, :]).sum(axis=1)


def mass_kernel(i, j, xq, phi, grad, mu):
    return phi[:, i] * phi[:, j]


def gram_kernel(i, j, xq, phi, grad, mu):
    return mu[:, i] * phi[:, j]


def grad_dual_kernel(k):
    def kernel(i, j, xq, phi, grad, mu):
        return grad[:, j, k] * mu[:, i]
    return kernel


def grad_primal_kernel(k):
    def kernel(i, j, xq, phi, grad, mu):
        return grad[:, j, k] * phi[:, i]
    return kernel
