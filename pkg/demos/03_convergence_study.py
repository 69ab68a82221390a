"""Refinement study: projection rates and the self-referential fitting rate.

Runs the same harness as `fetps study` through the library API and prints
the error table. The fitting column compares consecutive levels because
the exact minimizer has no closed form.
"""

import numpy as np

from fetps import Domain, StudyConfig, run_study

domain = Domain(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
config = StudyConfig(
    field="sin-product",
    domain=domain,
    levels=4,
    base_cells=8,
    kind="simplex",
    alpha=1e-3,
    n_data=1500,
    seed=7,
    columns=("qh_l2", "qh_h1", "fit_energy"),
)

rows = run_study(config)

header = f"{'level':>5} {'h':>9}"
for col in config.columns:
    header += f" {col:>14} {'order':>6}"
print(header)
for row in rows:
    line = f"{row.level:>5} {row.h:>9.5f}"
    for col in config.columns:
        err = row.errors.get(col)
        order = row.orders.get(col)
        line += f" {err:>14.4e}" if err is not None else f" {'-':>14}"
        line += f" {order:>6.2f}" if order is not None else f" {'-':>6}"
    print(line)

print()
print("qh_l2 halves twice per level (order 2), qh_h1 once (order 1);")
print("fit_energy is the energy norm of consecutive-level differences.")
