"""Why the dual basis matters: diagonal Gram matrix and exact condensation.

The dual basis is biorthogonal to the nodal basis, so the coupling matrix
between the gradient unknown and the multiplier is diagonal. That turns the
block elimination of both vector unknowns into diagonal scaling, and the
reduced system agrees with a dense solve of the full three-block system to
machine precision.
"""

import numpy as np
import scipy.sparse as sp

from fetps import (
    Domain,
    ScatteredData,
    assemble_gram_full,
    assemble_system,
    build_structured_mesh,
    condense,
    make_element_pair,
    recover_auxiliary,
    solve_reduced,
    solve_saddle_dense,
)
from fetps.system import SolverConfig

# ----------------------------------------------------------------------
# the reference-triangle pair: duals are affine, peak value 3 at their node
pair = make_element_pair("triangle")
print("dual basis at the reference triangle corners:")
print(pair.dual_eval(pair.nodes))

# ----------------------------------------------------------------------
# the assembled coupling is diagonal on any mesh
domain = Domain(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
mesh = build_structured_mesh(domain, (6, 6), "simplex")
gram = assemble_gram_full(mesh)
diag = gram.diagonal()
off = abs(gram - sp.diags(diag))
print(f"\nGram matrix on a 6x6 triangle mesh: {gram.shape[0]} rows, "
      f"max off-diagonal {off.data.max() if off.nnz else 0.0:.1e}, "
      f"min diagonal {diag.min():.3e}")

# ----------------------------------------------------------------------
# condensed solve vs dense three-block oracle
rng = np.random.default_rng(1)
pts = rng.uniform(0, 1, (30, 2))
data = ScatteredData(pts, np.sin(3 * pts[:, 0]) * pts[:, 1])
blocks = assemble_system(mesh, data)
alpha = 1e-2

op = condense(blocks, alpha)
u = solve_reduced(op, blocks.f, SolverConfig(rtol=1e-12))
triple = recover_auxiliary(blocks, u, alpha)
oracle = solve_saddle_dense(blocks, alpha)

n = blocks.n
total = (1 + 2 * mesh.dim) * n
print(f"\nreduced system: {n} unknowns (dense saddle oracle: {total})")
for name, ours, ref in (("u", triple.u, oracle.u),
                        ("sigma", triple.sigma, oracle.sigma),
                        ("phi", triple.phi, oracle.phi)):
    rel = np.linalg.norm(ours - ref) / np.linalg.norm(ref)
    print(f"  {name:5s} relative difference vs oracle: {rel:.2e}")
