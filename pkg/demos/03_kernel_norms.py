"""One process, three memory kernels.

The memory kernel of a reduced master equation is not unique: it depends on
the reference environment state behind the projection superoperators. All
choices reproduce the same reduced dynamics, but their kernels decay at very
different rates, and a faster-decaying kernel means a shorter memory cutoff
for the same accuracy.

Three choices on the driven two-qubit model:

* fixed      - project onto the initial environment marginal (the textbook
               time-independent choice)
* frozen     - reference generated with the system held in its excited state
* true-env   - project onto the actual evolving environment marginal

The time-dependent choices decay several times faster than the fixed one.
"""

import numpy as np

from memtensor import (
    FixedState,
    FrozenSystem,
    ProjectorChoice,
    SpaceLayout,
    TimeGrid,
    TrueEnvironment,
    example_initial_state,
    example_model,
    kernel_norm_curve,
    partial_trace,
)

LAYOUT = SpaceLayout(2, 2)
model = example_model()
rho0 = example_initial_state()
tau0 = partial_trace(rho0, LAYOUT, "environment")
excited = np.diag([1.0, 0.0]).astype(complex)

grid = TimeGrid(0.0, 0.3125, 16)  # kernel arguments (0, t) for wt up to 5
h = grid.dt / 16
choices = [
    ProjectorChoice(FixedState(tau0), h),
    ProjectorChoice(FrozenSystem(lambda t: excited), h),
    ProjectorChoice(TrueEnvironment(), h),
]

print("computing ||K(t, 0)|| along the grid for each projector choice...\n")
rows = kernel_norm_curve(model, choices, grid, rho0, substeps=64)
curves = {}
for label, t, norm in rows:
    curves.setdefault(label, []).append(norm)

print(f"{'wt':>6}  {'fixed':>10}  {'frozen':>10}  {'true-env':>10}")
for j in range(grid.steps):
    t = grid.time(j + 1)
    print(
        f"{t:6.2f}  {curves['fixed'][j]:10.4f}  {curves['frozen'][j]:10.4f}  "
        f"{curves['true-env'][j]:10.4f}"
    )

final = {label: curve[-1] for label, curve in curves.items()}
print(
    f"\nat wt = 5 the fixed-reference kernel is still at {final['fixed']:.2f} "
    f"while the\ntrue-environment one has decayed to {final['true-env']:.2f} "
    f"({final['fixed'] / final['true-env']:.0f}x smaller)"
)
