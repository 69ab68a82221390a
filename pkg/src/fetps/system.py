"""Static condensation to one SPD system, its iterative solve, and oracles.

With the Gram matrix diagonal (c > 0), the gradient and multiplier unknowns
eliminate exactly from the three-block system

    [ R + rK   -rW^T    -B^T ] [ u     ]   [ f ]
    [ -rW    alpha*A+rM  D   ] [ sigma ] = [ 0 ]
    [ -B       D         0   ] [ phi   ]   [ 0 ]

leaving the reduced operator

    S = (R + rK) - r (W^T D^-1 B + B^T D^-1 W)
        + B^T D^-1 (alpha*K + rM) D^-1 B      (summed over components)

which is symmetric and, for admissible data, positive definite. The
stabilization weight r is consistent and fixed to 1; it is kept as a module
constant so its effect can be probed in tests.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import NoConvergenceError, SingularSystemError

STABILIZATION_R = 1.0

DENSE_ORACLE_CAP = 3000


@dataclass(frozen=True)
class SolverConfig:
    """Conjugate-gradient settings for the reduced SPD solve."""

    rtol: float = 1e-10
    max_iter: int = None  # defaults to 10 * n
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("rtol must lie in (0, 1)")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.preconditioner not in ("jacobi", "none"):
            raise ValueError("preconditioner must be 'jacobi' or 'none'")


@dataclass(frozen=True)
class ReducedOperator:
    """Explicit sparse reduced operator with its smoothing weight.

    `apply` evaluates the same operator as the composition of the original
    blocks. The two agree up to rounding in the explicit triple products;
    the composition preserves the kernel identities (constants, linears)
    to machine precision even for extreme alpha, so the solver uses it for
    residual refinement.
    """

    matrix: sp.csr_matrix
    alpha: float
    apply: object = None


@dataclass(frozen=True)
class SolutionTriple:
    """Smoother coefficients with recovered gradient and multiplier."""

    u: np.ndarray
    sigma: np.ndarray  # (d, n)
    phi: np.ndarray    # (d, n)


def condense(blocks, alpha, r=STABILIZATION_R):
    """Eliminate gradient and multiplier unknowns into one SPD operator."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    c = blocks.gram_diag
    if np.any(c <= 0):
        raise SingularSystemError("Gram diagonal has a nonpositive entry")
    dinv = 1.0 / c
    S = (blocks.R + r * blocks.K).tocsr()
    inner = (alpha * blocks.K + r * blocks.mass).tocsr()
    for k in range(blocks.dim):
        Bs = blocks.B[k].multiply(dinv[:, None]).tocsr()  # D^-1 B_k
        S = S - r * (blocks.W[k].T @ Bs) - r * (Bs.T @ blocks.W[k])
        S = S + Bs.T @ inner @ Bs
    asym = abs(S - S.T)
    max_asym = asym.data.max() if asym.nnz else 0.0
    scale = np.abs(S.data).max() if S.nnz else 1.0
    if max_asym > 1e-12 * scale:
        raise SingularSystemError(
            f"condensed operator asymmetric: {max_asym:.3e} vs scale {scale:.3e}"
        )
    S = ((S + S.T) * 0.5).tocsr()
    S.sum_duplicates()

    R, K, mass = blocks.R, blocks.K, blocks.mass
    B, W = blocks.B, blocks.W
    dim = blocks.dim

    def apply(u):
        out = R @ u + r * (K @ u)
        for k in range(dim):
            s = dinv * (B[k] @ u)
            out -= r * (W[k].T @ s)
            out -= B[k].T @ (dinv * (r * (W[k] @ u)))
            out += B[k].T @ (dinv * (alpha * (K @ s) + r * (mass @ s)))
        return out

    return ReducedOperator(matrix=S, alpha=float(alpha), apply=apply)


def _pcg(S, rhs, minv, abs_tol, max_iter):
    """Plain preconditioned CG; returns (x, iterations, achieved residual norm)."""
    x = np.zeros(S.shape[0])
    res = rhs.copy()
    rnorm = np.linalg.norm(res)
    if rnorm <= abs_tol:
        return x, 0, rnorm
    z = minv * res if minv is not None else res
    p = z.copy()
    rz = res @ z
    for it in range(1, max_iter + 1):
        Sp = S @ p
        pSp = p @ Sp
        if pSp <= 0.0:
            raise SingularSystemError(
                "conjugate gradients broke down; operator not positive definite"
            )
        step = rz / pSp
        x += step * p
        res -= step * Sp
        rnorm = np.linalg.norm(res)
        if rnorm <= abs_tol:
            return x, it, rnorm
        z = minv * res if minv is not None else res
        rz_new = res @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, max_iter, rnorm


def solve_reduced(op, f, cfg=None, return_stats=False):
    """Solve the reduced SPD system by (optionally Jacobi-) preconditioned CG.

    CG runs on the explicitly assembled operator; when the operator carries
    a block-composition `apply`, the solution is polished by iterative
    refinement against the composition residual, which removes the rounding
    bias of the explicit triple products at large alpha.

    Raises NoConvergenceError (carrying the last relative residual) when the
    iteration cap is hit, and SingularSystemError when the operator turns
    out not to be positive definite (inadmissible data).
    """
    cfg = cfg or SolverConfig()
    S = op.matrix
    n = S.shape[0]
    f = np.asarray(f, dtype=float).ravel()
    if f.shape[0] != n:
        raise ValueError("right-hand side length does not match operator")
    fnorm = np.linalg.norm(f)
    if fnorm < 1e-14:
        u = np.zeros(n)
        return (u, {"iterations": 0, "residual": 0.0}) if return_stats else u
    if cfg.preconditioner == "jacobi":
        diag = S.diagonal()
        if np.any(diag <= 0):
            raise SingularSystemError("nonpositive diagonal; operator not SPD")
        minv = 1.0 / diag
    else:
        minv = None
    max_iter = cfg.max_iter if cfg.max_iter is not None else 10 * n
    abs_tol = cfg.rtol * fnorm

    x, used, rnorm = _pcg(S, f, minv, abs_tol, max_iter)
    total = used
    if rnorm > abs_tol:
        raise NoConvergenceError(
            f"CG did not reach rtol={cfg.rtol:g} in {max_iter} iterations "
            f"(residual {rnorm / fnorm:.3e})",
            residual=rnorm / fnorm,
            iterations=total,
        )
    rel = rnorm / fnorm
    if op.apply is not None:
        # Best-effort polish: the composition can be applied more accurately
        # than the explicit products were formed, but it also has its own
        # rounding floor, so refine only while it clearly helps.
        rel = np.linalg.norm(f - op.apply(x)) / fnorm
        for _ in range(4):
            if rel <= cfg.rtol or total >= max_iter:
                break
            res = f - op.apply(x)
            delta, used, _ = _pcg(
                S, res, minv, 0.05 * np.linalg.norm(res), max_iter - total
            )
            total += used
            candidate = x + delta
            new_rel = np.linalg.norm(f - op.apply(candidate)) / fnorm
            if new_rel >= 0.5 * rel:
                if new_rel < rel:
                    x, rel = candidate, new_rel
                break
            x, rel = candidate, new_rel
    stats = {"iterations": total, "residual": float(rel)}
    return (x, stats) if return_stats else x


def recover_auxiliary(blocks, u, alpha, r=STABILIZATION_R):
    """Back-substitute the gradient and multiplier from the block rows.

    sigma_k = D^-1 B_k u, phi_k = D^-1 (r W_k u - (alpha K + r M) sigma_k).
    """
    u = np.asarray(u, dtype=float).ravel()
    c = blocks.gram_diag
    if np.any(c <= 0):
        raise SingularSystemError("Gram diagonal has a nonpositive entry")
    dinv = 1.0 / c
    d = blocks.dim
    n = blocks.n
    sigma = np.empty((d, n))
    phi = np.empty((d, n))
    inner = (alpha * blocks.K + r * blocks.mass).tocsr()
    for k in range(d):
        sigma[k] = dinv * (blocks.B[k] @ u)
        phi[k] = dinv * (r * (blocks.W[k] @ u) - inner @ sigma[k])
    return SolutionTriple(u=u, sigma=sigma, phi=phi)


def saddle_matrix_dense(blocks, alpha, r=STABILIZATION_R):
    """Dense (1+2d)n x (1+2d)n symmetric indefinite three-block matrix."""
    d = blocks.dim
    n = blocks.n
    D = sp.diags(blocks.gram_diag)
    inner = alpha * blocks.K + r * blocks.mass
    Z = None
    grid = [[None] * (1 + 2 * d) for _ in range(1 + 2 * d)]
    grid[0][0] = blocks.R + r * blocks.K
    for k in range(d):
        grid[0][1 + k] = -r * blocks.W[k].T
        grid[0][1 + d + k] = -blocks.B[k].T
        grid[1 + k][0] = -r * blocks.W[k]
        grid[1 + k][1 + k] = inner
        grid[1 + k][1 + d + k] = D
        grid[1 + d + k][0] = -blocks.B[k]
        grid[1 + d + k][1 + k] = D
    return sp.bmat(grid, format="csr").toarray()


def solve_saddle_dense(blocks, alpha, f=None, r=STABILIZATION_R, cap=DENSE_ORACLE_CAP):
    """Direct dense factorization of the full three-block system (oracle).

    Refuses systems larger than `cap` total unknowns. Raises
    SingularSystemError when the factorization detects (near-)singularity,
    which is how inadmissible scattered data shows up here.
    """
    d = blocks.dim
    n = blocks.n
    total = (1 + 2 * d) * n
    if total > cap:
        raise ValueError(
            f"dense saddle solve refused: {total} unknowns exceeds cap {cap}"
        )
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    A = saddle_matrix_dense(blocks, alpha, r=r)
    rhs = np.zeros(total)
    fvec = blocks.f if f is None else np.asarray(f, dtype=float).ravel()
    rhs[:n] = fvec
    lu, piv = scipy.linalg.lu_factor(A)
    # 1-norm condition estimate from the LU factors
    anorm = np.abs(A).sum(axis=0).max()
    rcond, _ = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if rcond < 1e-13:
        raise SingularSystemError(
            f"saddle matrix numerically singular (rcond={rcond:.3e}); "
            "scattered data may lack d+1 affinely independent points"
        )
    sol = scipy.linalg.lu_solve((lu, piv), rhs)
    resid = np.linalg.norm(A @ sol - rhs)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm > 0 and resid / rhs_norm > 1e-10:
        raise SingularSystemError(
            f"dense saddle solve residual {resid / rhs_norm:.3e} exceeds 1e-10"
        )
    u = sol[:n]
    sigma = sol[n:n + d * n].reshape(d, n)
    phi = sol[n + d * n:].reshape(d, n)
    return SolutionTriple(u=u, sigma=sigma, phi=phi)
