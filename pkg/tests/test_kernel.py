"""Projection superoperators, NZ kernels, discrete-continuum consistency."""

import numpy as np
import pytest

from memtensor.linalg import (
    SpaceLayout,
    apply_superop,
    devectorize,
    left_mult_superop,
    operator_norm,
    partial_trace,
    right_mult_superop,
    trace_norm,
    vectorize,
)
from memtensor.models import (
    EXAMPLE_PARAMETERS,
    PAULI,
    LindbladModel,
    TimeGrid,
    evolve_state,
    example_initial_state,
    example_model,
    propagator,
)
from memtensor.tomography import (
    FixedState,
    FrozenSystem,
    ReferenceStates,
    TrueEnvironment,
    reconstruct_family,
)
from memtensor.kernel import (
    ProjectorChoice,
    convergence_study,
    discrete_generator,
    discrete_inhomogeneity,
    discrete_kernel,
    discrete_kernel_series,
    kernel_norm_curve,
    master_equation_rhs,
    nz_generator_direct,
    nz_inhomogeneity,
    nz_kernel_direct,
    nz_kernel_slice,
    projector_superop,
)
from memtensor.transfer import MemoryConfig, build_tensors

RNG = np.random.default_rng(77003)
LAYOUT = SpaceLayout(2, 2)
KET0 = np.array([1.0, 0.0])
KET1 = np.array([0.0, 1.0])
PLUS = (KET0 + KET1) / np.sqrt(2)
MINUS = (KET0 - KET1) / np.sqrt(2)
TAU0 = 0.75 * np.outer(PLUS, PLUS) + 0.25 * np.outer(MINUS, MINUS)


def random_state(d):
    a = RNG.standard_normal((d, d)) + 1j * RNG.standard_normal((d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def decoupled_model():
    p = EXAMPLE_PARAMETERS
    h = 0.5 * p["omega"] * np.kron(PAULI["Z"], PAULI["I"]) + 0.5 * p["omega_env"] * np.kron(
        PAULI["I"], PAULI["Z"]
    )
    pump = np.kron(PAULI["I"], np.array([[0, 1], [0, 0]], dtype=complex))
    return LindbladModel(LAYOUT, lambda t: h, [(pump, p["pump_rate"])])


def all_policies():
    return [
        FixedState(TAU0),
        TrueEnvironment(),
        FrozenSystem(lambda t: np.outer(KET0, KET0).astype(complex)),
    ]


# --- projectors -------------------------------------------------------------


def test_projector_superop_basics():
    tau = random_state(2)
    p, q = projector_superop(tau, LAYOUT)
    np.testing.assert_array_equal(p + q, np.eye(16))
    assert np.max(np.abs(p @ p - p)) < 1e-12
    rho = random_state(2)
    product = np.kron(rho, tau)
    np.testing.assert_allclose(apply_superop(p, product), product, atol=1e-12)
    assert np.max(np.abs(apply_superop(q, product))) < 1e-12


def test_projector_identities_all_policies():
    model = example_model()
    rho0 = example_initial_state()
    for policy in all_policies():
        refs = ReferenceStates(policy, model, rho0, substep=1 / 32)
        for _ in range(5):
            t, s = sorted(RNG.uniform(0.0, 5.0, size=2))[::-1]
            p_t, q_t = projector_superop(refs.state(t), LAYOUT)
            p_s, q_s = projector_superop(refs.state(s), LAYOUT)
            assert np.max(np.abs(p_t @ p_s - p_t)) < 1e-12
            assert np.max(np.abs(q_t @ q_s - q_s)) < 1e-12
            assert np.max(np.abs(p_t @ q_s)) < 1e-12
            assert np.max(np.abs(q_t @ p_s - (p_s - p_t))) < 1e-12


# --- direct NZ objects ------------------------------------------------------


def test_kernel_x_independence():
    model = example_model()
    rho0 = example_initial_state()
    x_a = np.eye(2) / 2
    x_b = np.array([[0.3, 0.1j], [-0.1j, 0.7]])
    for policy in (FixedState(TAU0), TrueEnvironment()):
        choice = ProjectorChoice(policy)
        k_a = nz_kernel_direct(model, choice, 0.5, 1.5, 32, rho_se0=rho0, x_env=x_a)
        k_b = nz_kernel_direct(model, choice, 0.5, 1.5, 32, rho_se0=rho0, x_env=x_b)
        assert operator_norm(k_a - k_b) < 1e-10


def test_derivative_term_vanishes_for_fixed_state():
    model = example_model()
    choice = ProjectorChoice(FixedState(TAU0))
    with_term = nz_kernel_direct(model, choice, 0.0, 1.0, 32, derivative_term=True)
    without = nz_kernel_direct(model, choice, 0.0, 1.0, 32, derivative_term=False)
    assert operator_norm(with_term - without) < 1e-12


def test_kernel_vanishes_for_decoupled_model():
    model = decoupled_model()
    choice = ProjectorChoice(FixedState(TAU0))
    k = nz_kernel_direct(model, choice, 0.0, 1.3, 32)
    scale = operator_norm(nz_generator_direct(model, choice, 0.0))
    assert operator_norm(k) < 1e-8 * max(scale, 1.0)


def test_generator_direct_decoupled_is_system_commutator():
    model = decoupled_model()
    choice = ProjectorChoice(FixedState(TAU0))
    gen = nz_generator_direct(model, choice, 0.7)
    sz = PAULI["Z"]
    oracle = -1j * (left_mult_superop(0.5 * sz) - right_mult_superop(0.5 * sz))
    np.testing.assert_allclose(gen, oracle, atol=1e-12)


def test_kernel_rejects_bad_interval():
    with pytest.raises(ValueError):
        nz_kernel_direct(example_model(), ProjectorChoice(FixedState(TAU0)), 1.0, 1.0)


def test_kernel_derivative_step_richardson():
    # halving the finite-difference step must not move the kernel by more
    # than its quadratic error estimate
    model = example_model()
    rho0 = example_initial_state()
    k_h = nz_kernel_direct(
        model, ProjectorChoice(TrueEnvironment(), 1 / 256), 0.5, 1.5, 128, rho_se0=rho0
    )
    k_h2 = nz_kernel_direct(
        model, ProjectorChoice(TrueEnvironment(), 1 / 512), 0.5, 1.5, 128, rho_se0=rho0
    )
    assert operator_norm(k_h - k_h2) < 1e-2 * operator_norm(k_h)


def test_inhomogeneity_zero_for_matched_product_state():
    model = example_model()
    tau = np.array(TAU0)
    rho_se0 = np.kron(np.diag([0.6, 0.4]).astype(complex), tau)
    choice = ProjectorChoice(FixedState(tau))
    j = nz_inhomogeneity(model, choice, np.eye(4), rho_se0, 1.0, 32)
    assert trace_norm(j) < 1e-12


def test_inhomogeneity_zero_for_entanglement_breaking_preparation():
    model = example_model()
    rho0 = example_initial_state()
    # replace the system with |0><0|: the post-preparation state is a product
    # with environment factor tr_S rho0, matching the reference state
    replace = np.outer(vectorize(np.outer(KET0, KET0)), vectorize(np.eye(2)).conj())
    choice = ProjectorChoice(FixedState(TAU0))
    j = nz_inhomogeneity(model, choice, replace, rho0, 1.0, 32)
    assert trace_norm(j) < 1e-12


def test_kernel_slice_matches_direct_evaluation():
    model = example_model()
    rho0 = example_initial_state()
    t = 1.5
    choice = ProjectorChoice(FixedState(TAU0))
    pairs = nz_kernel_slice(model, choice, t, [0.5, 1.0], substeps=32, rho_se0=rho0)
    for s, kernel in pairs:
        direct = nz_kernel_direct(
            model, choice, s, t, substeps=int(round((t - s) / 0.5 * 32)), rho_se0=rho0
        )
        assert operator_norm(kernel - direct) < 1e-12
    with pytest.raises(ValueError):
        nz_kernel_slice(model, choice, t, [t], substeps=8)


def test_master_equation_closure_every_policy():
    # the assembled equation of motion (generator + memory integral +
    # inhomogeneity) must reproduce the true reduced derivative for every
    # projector choice, since all choices describe the same process
    model = example_model()
    rho0 = example_initial_state()
    t_eval, h_fd = 1.0, 1e-4

    def sys_state(t, substeps_per_unit=512):
        n = max(1, int(round(substeps_per_unit * t)))
        u = propagator(model, 0.0, t, n)
        return partial_trace(
            devectorize(u @ vectorize(rho0), 4), LAYOUT, "system"
        )

    rho_dot = (sys_state(t_eval + h_fd) - sys_state(t_eval - h_fd)) / (2 * h_fd)
    signal = trace_norm(rho_dot)

    def assembled_rhs(policy, n_s):
        choice = ProjectorChoice(policy, derivative_step=1 / 256)
        ds = t_eval / n_s
        midpoints = [(j + 0.5) * ds for j in range(n_s)]
        slice_k = nz_kernel_slice(
            model, choice, t_eval, midpoints, substeps=24, rho_se0=rho0
        )
        gen = nz_generator_direct(model, choice, t_eval, rho_se0=rho0)
        rhs = apply_superop(gen, sys_state(t_eval))
        rhs = rhs + nz_inhomogeneity(model, choice, np.eye(4), rho0, t_eval, 512)
        vec, prev = vectorize(rho0), 0.0
        for s, kernel in slice_k:
            vec = propagator(model, prev, s, max(4, int(round((s - prev) * 128)))) @ vec
            prev = s
            rho_s = partial_trace(devectorize(vec, 4), LAYOUT, "system")
            rhs = rhs + ds * apply_superop(kernel, rho_s)
        return rhs

    # midpoint quadrature converges quadratically for the constant projector
    coarse = trace_norm(assembled_rhs(FixedState(TAU0), 24) - rho_dot)
    fine = trace_norm(assembled_rhs(FixedState(TAU0), 48) - rho_dot)
    assert coarse / fine > 3.0
    assert fine < 0.01 * signal
    # the time-dependent projectors close the same equation (floor set by
    # the projector-derivative stencil, well under 1%)
    for policy in (
        TrueEnvironment(),
        FrozenSystem(lambda t: np.outer(KET0, KET0).astype(complex)),
    ):
        err = trace_norm(assembled_rhs(policy, 48) - rho_dot)
        assert err < 0.01 * signal


def test_inhomogeneity_decays_with_time():
    # the initial-correlation influence fades as the environment is pumped
    model = example_model()
    rho0 = example_initial_state()
    choice = ProjectorChoice(FixedState(TAU0))
    early = nz_inhomogeneity(model, choice, np.eye(4), rho0, 1.25, substeps=128)
    late = nz_inhomogeneity(model, choice, np.eye(4), rho0, 5.0, substeps=256)
    assert trace_norm(late) < trace_norm(early)


def test_semigroup_kernel_route_is_consistent():
    # trivial environment: the projector is the identity, so the kernel
    # vanishes exactly and the one-step map carries the whole generator at
    # first order
    from memtensor.models import liouvillian

    h = 0.3 * np.array([[1, 0], [0, -1]], dtype=complex)
    decay = np.array([[0, 1], [0, 0]], dtype=complex)
    model = LindbladModel(SpaceLayout(2, 1), lambda t: h, [(decay, 0.5)])
    tau = np.eye(1, dtype=complex)
    choice = ProjectorChoice(FixedState(tau))
    kernel = nz_kernel_direct(model, choice, 0.0, 1.0, 16)
    assert operator_norm(kernel) < 1e-12
    errors = []
    for dt in (0.1, 0.05):
        grid = TimeGrid(0.0, dt, 1)
        family = reconstruct_family(model, grid, FixedState(tau), substeps=32)
        errors.append(
            operator_norm(discrete_generator(family, 0) - liouvillian(model, 0.0))
        )
    assert errors[1] < errors[0]
    assert 1.5 < errors[0] / errors[1] < 2.6


def test_inhomogeneity_matches_residual_series():
    # J(t) is the dt -> 0 limit of residual/dt at fixed physical time
    model = example_model()
    rho0 = example_initial_state()
    t = 1.25
    choice = ProjectorChoice(FixedState(TAU0))
    target = nz_inhomogeneity(model, choice, np.eye(4), rho0, t, substeps=1024)
    assert trace_norm(target) > 1e-3
    errors = []
    for n in (32, 64, 128):
        grid = TimeGrid(0.0, t / n, n)
        family = reconstruct_family(model, grid, FixedState(TAU0), substeps=32)
        joint = evolve_state(rho0, model, grid, substeps=32)
        sys_traj = [partial_trace(r, LAYOUT, "system") for r in joint]
        config = MemoryConfig(dt=grid.dt, m=n, c=n)
        tensors = build_tensors(family, config, dense_window=n, exact_states=sys_traj)
        estimate = discrete_inhomogeneity(tensors.residuals[n], grid.dt)
        errors.append(trace_norm(estimate - target))
    # first order in dt
    assert 1.5 < errors[0] / errors[1] < 2.6
    assert 1.5 < errors[1] / errors[2] < 2.6


# --- discrete estimates -----------------------------------------------------


def test_discrete_generator_converges_to_direct():
    # dt must resolve the fast environment splitting before the first-order
    # asymptotics show
    model = example_model()
    choice = ProjectorChoice(FixedState(TAU0))
    target = nz_generator_direct(model, choice, 0.0)
    errors = []
    for dt in (0.05, 0.025, 0.0125):
        grid = TimeGrid(0.0, dt, 1)
        family = reconstruct_family(model, grid, FixedState(TAU0), substeps=64)
        errors.append(operator_norm(discrete_generator(family, 0) - target))
    assert 1.5 < errors[0] / errors[1] < 2.6
    assert 1.5 < errors[1] / errors[2] < 2.6


def test_discrete_estimates_zero_dynamics():
    model = LindbladModel(LAYOUT, lambda t: np.zeros((4, 4)))
    grid = TimeGrid(0.0, 0.25, 4)
    family = reconstruct_family(model, grid, FixedState(np.eye(2) / 2), substeps=4)
    assert operator_norm(discrete_generator(family, 0)) < 1e-12
    joint = evolve_state(example_initial_state(), model, grid, substeps=4)
    sys_traj = [partial_trace(r, LAYOUT, "system") for r in joint]
    config = MemoryConfig(dt=grid.dt, m=4, c=4)
    tensors = build_tensors(family, config, dense_window=4, exact_states=sys_traj)
    assert operator_norm(discrete_kernel(tensors, (0, 2))) < 1e-12
    assert trace_norm(discrete_inhomogeneity(tensors.residuals[2], grid.dt)) < 1e-12
    with pytest.raises(ValueError):
        discrete_kernel(tensors, (2, 2))


# --- kernel series and master-equation RHS ----------------------------------


@pytest.fixture(scope="module")
def example_series():
    model = example_model()
    rho0 = example_initial_state()
    grid = TimeGrid(0.0, 0.125, 16)
    family = reconstruct_family(model, grid, FixedState(TAU0), substeps=32)
    joint = evolve_state(rho0, model, grid, substeps=32)
    sys_traj = [partial_trace(r, LAYOUT, "system") for r in joint]
    series = discrete_kernel_series(family, sys_traj)
    return series, sys_traj


def test_series_trace_annihilation(example_series):
    series, _ = example_series
    costate = vectorize(np.eye(2)).conj()
    for j, gen in series.generator.items():
        assert np.max(np.abs(costate @ gen)) < 1e-9
    for (j, i), k in list(series.kernel.items())[:20]:
        rho = random_state(2)
        assert abs(np.trace(apply_superop(k, rho))) < 1e-8 * operator_norm(k)


def test_master_equation_rhs_discrepancy_halves_with_dt():
    model = example_model()
    rho0 = example_initial_state()
    t_probe = 1.0
    discrepancies = []
    fd_norms = []
    for n in (20, 40, 80):
        grid = TimeGrid(0.0, 1.25 / n, n)
        family = reconstruct_family(model, grid, FixedState(TAU0), substeps=32)
        joint = evolve_state(rho0, model, grid, substeps=32)
        sys_traj = [partial_trace(r, LAYOUT, "system") for r in joint]
        series = discrete_kernel_series(family, sys_traj)
        j = round(t_probe / grid.dt)
        rhs = master_equation_rhs(series, sys_traj, j)
        fd = (sys_traj[j + 1] - sys_traj[j]) / grid.dt
        discrepancies.append(trace_norm(rhs - fd))
        fd_norms.append(trace_norm(fd))
    assert 1.4 < discrepancies[0] / discrepancies[1] < 3.0
    assert 1.4 < discrepancies[1] / discrepancies[2] < 3.0
    assert discrepancies[2] < fd_norms[2]


def test_master_equation_rhs_decoupled(example_series):
    model = decoupled_model()
    rho0 = example_initial_state()
    grid = TimeGrid(0.0, 0.05, 8)
    family = reconstruct_family(model, grid, FixedState(TAU0), substeps=32)
    joint = evolve_state(rho0, model, grid, substeps=32)
    sys_traj = [partial_trace(r, LAYOUT, "system") for r in joint]
    series = discrete_kernel_series(family, sys_traj)
    rho = sys_traj[3]
    rhs = master_equation_rhs(series, sys_traj, 3)
    sz = PAULI["Z"]
    oracle = -0.5j * (sz @ rho - rho @ sz)
    assert trace_norm(rhs - oracle) < 0.1


def test_master_equation_rhs_argument_errors(example_series):
    series, sys_traj = example_series
    with pytest.raises(ValueError):
        master_equation_rhs(series, sys_traj, 0)
    with pytest.raises(ValueError):
        master_equation_rhs(series, sys_traj[:3], 5)
    with pytest.raises(ValueError):
        master_equation_rhs(series, sys_traj, 16)  # no generator at the last point


# --- curves and convergence ---------------------------------------------------


def test_kernel_norm_curve_matches_direct_evaluation():
    model = example_model()
    rho0 = example_initial_state()
    grid = TimeGrid(0.0, 0.5, 3)
    choice = ProjectorChoice(FixedState(TAU0))
    rows = kernel_norm_curve(model, [choice], grid, rho0, substeps=16)
    assert [r[1] for r in rows] == [0.5, 1.0, 1.5]
    direct = nz_kernel_direct(model, choice, 0.0, 1.5, substeps=48, rho_se0=rho0)
    assert abs(rows[-1][2] - operator_norm(direct)) < 1e-10
    for _, _, norm in rows:
        assert np.isfinite(norm) and norm > 0


def test_kernel_norm_curve_zero_for_decoupled():
    rows = kernel_norm_curve(
        decoupled_model(),
        [ProjectorChoice(FixedState(TAU0))],
        TimeGrid(0.0, 0.5, 2),
        substeps=16,
    )
    for _, _, norm in rows:
        assert norm < 1e-10


def test_convergence_study_decreases_with_refinement():
    model = example_model()
    rho0 = example_initial_state()
    choice = ProjectorChoice(FixedState(TAU0))
    rows = convergence_study(
        model, [2.5], [8, 32], choice, rho0, map_substeps=32, kernel_substeps=256
    )
    diffs = {n: rel for _, n, rel in rows}
    assert diffs[32] < diffs[8]


def test_convergence_monotone_with_slack():
    # non-increasing in N up to 5% wiggle room (the example wobbles +4.8%
    # between the two coarsest grids at wt = 5)
    model = example_model()
    rho0 = example_initial_state()
    choice = ProjectorChoice(FixedState(TAU0))
    n_values = [8, 16, 32, 64]
    rows = convergence_study(
        model, [5.0], n_values, choice, rho0, map_substeps=32, kernel_substeps=512
    )
    diffs = [rel for _, _, rel in rows]
    for coarse, fine in zip(diffs, diffs[1:]):
        assert fine < 1.05 * coarse


def test_direct_kernel_outputs_are_traceless():
    model = example_model()
    rho0 = example_initial_state()
    for policy in (FixedState(TAU0), TrueEnvironment()):
        k = nz_kernel_direct(model, ProjectorChoice(policy), 0.5, 2.0, 32, rho_se0=rho0)
        gen = nz_generator_direct(model, ProjectorChoice(policy), 0.7, rho_se0=rho0)
        for _ in range(3):
            rho = random_state(2)
            assert abs(np.trace(apply_superop(k, rho))) < 1e-8 * operator_norm(k)
            assert abs(np.trace(apply_superop(gen, rho))) < 1e-9 * max(operator_norm(gen), 1)


def test_convergence_study_rejects_degenerate_grid():
    with pytest.raises(ValueError):
        convergence_study(
            example_model(), [1.0], [1], ProjectorChoice(FixedState(TAU0))
        )
