"""Linearized saddle solver, nonlinear minimization and the shifted functionals."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from incompressa import materials as mat
from incompressa.fields import BoxDomain, Face, VectorField, norm_lp, quadrature_weights
from incompressa.flow_recovery import recover, velocity_library
from incompressa.linalg import ConvergenceError, IndefiniteOperatorError
from incompressa.solvers import (
    AugmentedLagrangian,
    ConvergenceRecord,
    LinearizedProblem,
    LinearOperators,
    LineSearchError,
    NonlinearProblem,
    OptimizerOptions,
    Penalty,
    Q1Grid,
    FastLaplacian,
    linearized_energy,
    load_functional,
    minimize_nonlinear,
    nonlinear_energy,
    shifted_functionals,
    solve_linearized,
    solve_shifted,
)

NH = mat.MaterialModel.neo_hookean(1.0)
VOL = mat.VolumetricModel(1.0)
H_NH = mat.hessian_at_identity(NH, VOL)


def unit(n, gamma="full"):
    return BoxDomain((1.0, 1.0, 1.0), (n, n, n), gamma=gamma)


def sample(dom, fn):
    return VectorField.from_function(dom, fn)


def shear_load(dom, amp=0.01):
    return sample(dom, lambda x: amp * np.stack([np.sin(2 * np.pi * x[:, 1]), 0 * x[:, 0], 0 * x[:, 0]], axis=1))


def poly_load(dom, amp=0.01):
    return sample(dom, lambda x: amp * np.stack([x[:, 1] ** 2, x[:, 2] ** 2, x[:, 0] ** 2], axis=1))


def rotation_field(dom, amp=1.0):
    return sample(dom, lambda x: amp * np.stack([-(x[:, 1] - 0.5), x[:, 0] - 0.5, 0 * x[:, 0]], axis=1))


def manufactured(dom):
    """v* = curl(s e3), q* = sin(2 pi x1), f = -G lap v* + grad q* (hand-differentiated)."""
    x, y, z = dom.coords()
    pi = np.pi
    S = lambda t: np.sin(pi * t)  # noqa: E731
    C = lambda t: np.cos(pi * t)  # noqa: E731
    # s = S(x)^2 S(y)^2 S(z)^2, v* = (ds/dy, -ds/dx, 0)
    ds_dy = 2 * pi * S(x) ** 2 * S(y) * C(y) * S(z) ** 2
    ds_dx = 2 * pi * S(x) * C(x) * S(y) ** 2 * S(z) ** 2
    v = np.stack([ds_dy, -ds_dx, 0 * x])
    # for a = S^2: a'' = 2 pi^2 cos(2 pi t); for b = S C: b'' = -4 pi^2 S C
    a = lambda t: S(t) ** 2  # noqa: E731
    a2 = lambda t: 2 * pi**2 * np.cos(2 * pi * t)  # noqa: E731
    b = lambda t: S(t) * C(t)  # noqa: E731
    b2 = lambda t: -4 * pi**2 * S(t) * C(t)  # noqa: E731
    lap_v1 = 2 * pi * (a2(x) * b(y) * a(z) + a(x) * b2(y) * a(z) + a(x) * b(y) * a2(z))
    lap_v2 = -2 * pi * (b2(x) * a(y) * a(z) + b(x) * a2(y) * a(z) + b(x) * a(y) * a2(z))
    G = NH.shear_modulus
    f = np.stack([-G * lap_v1 + 2 * pi * np.cos(2 * pi * x), -G * lap_v2, 0 * x])
    return v, f


def l2_error(dom, a, b):
    return float(np.sqrt(np.sum(quadrature_weights(dom) * np.sum((a - b) ** 2, axis=0))))


# --------------------------------------------------------------------------
# discrete kernels
# --------------------------------------------------------------------------


def test_q1_adjoints():
    dom = BoxDomain((1.0, 2.0, 0.5), (5, 6, 7))
    g = Q1Grid(dom)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((3,) + dom.shape)
    P = rng.standard_normal((3, 3, 8) + g.cells)
    assert np.sum(g.grad9(u) * P) == pytest.approx(np.sum(u * g.grad9_t(P)), rel=1e-12)
    q = rng.standard_normal(g.cells)
    assert np.sum(g.cell_divergence(u) * q) == pytest.approx(np.sum(u * g.cell_divergence_t(q)), rel=1e-12)


def test_q1_exact_on_affine():
    dom = BoxDomain((1.0, 2.0, 0.5), (5, 6, 7))
    g = Q1Grid(dom)
    M = np.random.default_rng(1).standard_normal((3, 3))
    u = sample(dom, lambda x: x @ M.T + 1.0).data
    D = g.gauss_gradients(u)
    assert np.max(np.abs(D - M)) <= 1e-13
    assert np.max(np.abs(g.cell_divergence(u) - np.trace(M))) <= 1e-13


@pytest.mark.parametrize("gamma", ["full", Face(2, 0)])
def test_fast_laplacian_inverts_q1_laplacian(gamma):
    dom = unit(6, gamma)
    g = Q1Grid(dom)
    lap = FastLaplacian(dom)
    free = g.free_mask()
    rng = np.random.default_rng(2)
    u = rng.standard_normal(dom.shape) * free
    # Q1 stiffness via the gradient kernels: K u = grad^T (w grad u)
    K = lambda s: g.grad9_t(g.weight * g.grad9(s[None].repeat(3, 0)))[0] * free  # noqa: E731
    back = lap.solve(K(u))
    assert np.max(np.abs(back - u)) <= 1e-10


def test_fast_laplacian_needs_dirichlet_face():
    with pytest.raises(ValueError):
        FastLaplacian(unit(5, None))


# --------------------------------------------------------------------------
# load and linearized energy
# --------------------------------------------------------------------------


def test_load_functional():
    dom = unit(9)
    assert load_functional(VectorField.zeros(dom), rotation_field(dom)) == 0.0
    e1 = sample(dom, lambda x: np.tile([1.0, 0, 0], (len(x), 1)))
    assert load_functional(e1, e1) == pytest.approx(1.0, abs=1e-14)

    def f(x):
        return np.stack([np.sin(x[:, 0]), x[:, 1] ** 2, np.cos(x[:, 2])], axis=1)

    def v(x):
        return np.stack([x[:, 0] * x[:, 1], np.exp(x[:, 2]), x[:, 1]], axis=1)

    fine = load_functional(sample(unit(65), f), sample(unit(65), v))
    coarse = load_functional(sample(unit(9), f), sample(unit(9), v))
    assert coarse == pytest.approx(fine, rel=0.01)


def test_linearized_energy_cases():
    dom = unit(9)
    prob = LinearizedProblem(dom, H_NH)
    assert linearized_energy(prob, VectorField.zeros(dom)) == 0.0
    rot = rotation_field(dom)
    # div = 0.5 everywhere, zero on the clamped face x1 = 0: infeasible through the divergence
    face = unit(9, Face(0, 0))
    stretch = sample(face, lambda x: np.stack([0.5 * x[:, 0], 0 * x[:, 0], 0 * x[:, 0]], axis=1))
    assert stretch.satisfies_dirichlet(0.0)
    assert linearized_energy(LinearizedProblem(face, H_NH, feasibility_tol=1e-6), stretch) is mat.INF
    # infinitesimal rotation: no strain, no load
    assert abs(linearized_energy(prob.with_(vbar=rot), rot)) <= 1e-12
    # Dirichlet data violated
    assert linearized_energy(prob, rot) is mat.INF


def test_indefinite_tensor_rejected():
    bad = mat.ElasticityTensor(-np.eye(6))
    with pytest.raises(IndefiniteOperatorError):
        LinearizedProblem(unit(5), bad)


# --------------------------------------------------------------------------
# linearized solve
# --------------------------------------------------------------------------


def test_zero_data_gives_zero_solution():
    dom = unit(9)
    sol = solve_linearized(LinearizedProblem(dom, H_NH))
    assert np.array_equal(sol.v.data, np.zeros((3,) + dom.shape))
    assert np.all(sol.q == 0.0)
    assert sol.iterations == 0


@pytest.mark.parametrize("method", ["minres", "uzawa"])
def test_manufactured_solution_converges(method):
    errs = []
    for n in (9, 17):
        dom = unit(n)
        exact, f = manufactured(dom)
        sol = solve_linearized(LinearizedProblem(dom, H_NH, VectorField(dom, f), beta=0.0), tol=1e-9, method=method)
        assert sol.divergence_norm <= 1e-8
        assert sol.v.satisfies_dirichlet(0.0)
        errs.append(l2_error(dom, sol.v.data, exact))
    assert np.log2(errs[0] / errs[1]) >= 1.8


def test_residuals_recheck_independently():
    dom = unit(9)
    prob = LinearizedProblem(dom, H_NH, shear_load(dom), beta=0.1)
    tol = 1e-9
    sol = solve_linearized(prob, tol=tol)
    ops = LinearOperators.of(prob)
    v, q = sol.v.data, sol.q
    rm = ops.node_weights * prob.load.data - ops.apply_A(v) - ops.apply_Bt(q)
    rm[:, ~ops.free] = 0.0
    rc = ops.apply_B(v) - ops.apply_C(q)
    assert ops.force_norm(rm) <= tol
    assert ops.cell_norm(rc) <= tol
    assert sol.momentum_residual <= tol and sol.continuity_residual <= tol
    assert abs(np.mean(sol.q)) <= 1e-12 * max(1.0, np.max(np.abs(sol.q)))  # zero-mean gauge


def test_uniqueness_from_different_pressure_guesses():
    dom = unit(9)
    prob = LinearizedProblem(dom, H_NH, poly_load(dom, 1.0), beta=0.0)
    tol = 1e-10
    a = solve_linearized(prob, tol=tol)
    rng = np.random.default_rng(5)
    b = solve_linearized(prob, tol=tol, q0=rng.standard_normal(a.q.shape))
    c = solve_linearized(prob, tol=tol, v0=VectorField(dom, rng.standard_normal((3,) + dom.shape)))
    assert np.max(np.abs(a.v.data - b.v.data)) <= 10 * tol
    assert np.max(np.abs(a.v.data - c.v.data)) <= 10 * tol


def test_minimizer_beats_feasible_competitors():
    dom = unit(9)
    prob = LinearizedProblem(dom, H_NH, poly_load(dom, 1.0), beta=0.0)
    sol = solve_linearized(prob, tol=1e-11)
    e0 = linearized_energy(prob, sol.v, tol=1e-8)
    # perturb along discretely div-free directions: difference of two solutions for other loads
    other = solve_linearized(prob.with_(load=shear_load(dom, 1.0)), tol=1e-11).v
    for s in (1e-2, -1e-2, 1.0):
        assert linearized_energy(prob, sol.v + s * other, tol=1e-8) > e0


def test_face_clamped_problem():
    dom = unit(9, Face(2, 0))
    prob = LinearizedProblem(dom, H_NH, shear_load(dom, 1.0), beta=0.0)
    sol = solve_linearized(prob, tol=1e-9)
    assert sol.v.satisfies_dirichlet(0.0)
    assert sol.divergence_norm <= 1e-8
    assert norm_lp(sol.v) > 0


def test_max_iter_exceeded_reports_history():
    dom = unit(9)
    prob = LinearizedProblem(dom, H_NH, shear_load(dom, 1.0))
    with pytest.raises(ConvergenceError) as info:
        solve_linearized(prob, tol=1e-14, max_iter=3)
    assert info.value.history


# --------------------------------------------------------------------------
# nonlinear energy
# --------------------------------------------------------------------------


def nl(dom, h=0.05, load=None, mode=None, **opts):
    return NonlinearProblem(dom, NH, VOL, h, load, mode, OptimizerOptions(**opts))


def test_nonlinear_energy_zero_displacement():
    rep = nonlinear_energy(nl(unit(9), load=shear_load(unit(9))), VectorField.zeros(unit(9)))
    assert rep.value == 0.0 and rep.feasible


def test_flow_recovered_rotation_is_energy_free():
    dom = unit(9)
    v = velocity_library("rigid", omega=(0.3, -0.2, 1.0), center=(0.5, 0.5, 0.5))
    for h in (0.2, 0.05, 0.01):
        vh = recover(v, h, dom).v_h
        rep = nonlinear_energy(nl(dom, h=h), vh)
        assert abs(rep.isochoric) <= 1e-10
        assert abs(rep.volumetric) <= 1e-10
        assert rep.max_det_error <= 1e-10


def rotation_energy_closed_form(h, mu=1.0, c=1.0):
    """h^-2 W(I + h K) on the unit box for the infinitesimal rotation K about e3.

    (I + hK)^T (I + hK) = diag(1 + h^2, 1 + h^2, 1), so J = 1 + h^2.
    """
    J = 1 + h * h
    iso = mu * ((2 * J + 1) / J ** (2 / 3) - 3)
    vol = c * (J * J - 1 - 2 * np.log(J))
    return (iso + vol) / h**2


def test_infinitesimal_rotation_energy_vanishes_with_h():
    dom = unit(9)
    values = []
    for h in (0.1, 0.05, 0.025):
        rep = nonlinear_energy(nl(dom, h=h), rotation_field(dom))
        assert rep.value == pytest.approx(rotation_energy_closed_form(h), rel=1e-9)
        values.append(rep.value)
    assert values[0] / values[1] == pytest.approx(4, rel=0.02)  # ~ 2 c h^2
    assert values[1] / values[2] == pytest.approx(4, rel=0.01)


def test_rigid_invariance_of_stored_energy():
    dom = unit(9)
    h = 0.1
    v = sample(dom, lambda x: np.stack([np.sin(np.pi * x[:, 0]) * x[:, 1], x[:, 2] ** 2, x[:, 0] * x[:, 1]], axis=1))
    R = Rotation.from_rotvec([0.4, -0.7, 1.1]).as_matrix()
    X = dom.coords()
    y = X + h * v.data
    vr = VectorField(dom, (np.einsum("ij,j...->i...", R, y) - X) / h)
    a = nonlinear_energy(nl(dom, h=h), v)
    b = nonlinear_energy(nl(dom, h=h), vr)
    assert abs((a.isochoric + a.volumetric) - (b.isochoric + b.volumetric)) <= 1e-10


def test_infinite_energy_for_inverted_cells():
    dom = unit(5)
    h = 0.1
    v = sample(dom, lambda x: -2.0 / h * (x - 0.5))  # I + h grad v = -I
    rep = nonlinear_energy(nl(dom, h=h), v)
    assert rep.value is mat.INF and not rep.feasible


def test_quadratic_consistency():
    dom = unit(9)
    v = sample(dom, lambda x: np.stack([np.sin(np.pi * x[:, 1]), np.cos(x[:, 2]), x[:, 0] ** 2], axis=1))
    prob = nl(dom)
    ops = LinearOperators.of(prob.linearized())
    quad = ops.energy_density_sum(v.data)
    gaps = []
    for h in (1e-3, 5e-4, 2.5e-4):
        rep = nonlinear_energy(nl(dom, h=h), v)
        gaps.append(abs(rep.isochoric + rep.volumetric - quad))
    assert gaps[0] / gaps[1] >= 1.8 and gaps[1] / gaps[2] >= 1.8


def test_mode_validation():
    with pytest.raises(ValueError):
        Penalty(0.0)
    with pytest.raises(ValueError):
        AugmentedLagrangian(-1.0)
    with pytest.raises(ValueError):
        nl(unit(5), h=0.0)
    with pytest.raises(ValueError):
        ConvergenceRecord(0.1, 0.0, 0.0, -1.0, 0.0, 0.0, 1)


# --------------------------------------------------------------------------
# minimization
# --------------------------------------------------------------------------


def test_zero_load_returns_immediately():
    dom = unit(9)
    v, rep = minimize_nonlinear(nl(dom, mode=AugmentedLagrangian(1.0)))
    assert np.array_equal(v.data, np.zeros((3,) + dom.shape))
    assert rep.iterations == 0 and rep.converged


def test_augmented_lagrangian_reaches_feasibility():
    dom = unit(17)
    prob = nl(dom, h=0.05, load=shear_load(dom), mode=AugmentedLagrangian(1.0), gtol=1e-10, det_tol=1e-6)
    v, rep = minimize_nonlinear(prob)
    assert rep.converged
    assert rep.max_det_error <= 1e-6
    assert rep.energy <= nonlinear_energy(prob, VectorField.zeros(dom)).value
    for cycle in rep.energy_history:
        assert all(b <= a for a, b in zip(cycle, cycle[1:]))  # descent along accepted steps
    final = nonlinear_energy(
        NonlinearProblem(dom, NH, VOL, 0.05, prob.load, AugmentedLagrangian(rep.weight, rep.multipliers)), v
    )
    assert final.min_det > 0


def test_penalty_weights_approach_the_constrained_limit():
    dom = unit(9)
    load = poly_load(dom, 0.01)
    lin = solve_linearized(LinearizedProblem(dom, H_NH, load, beta=0.0), tol=1e-12)
    e_lin = linearized_energy(LinearizedProblem(dom, H_NH, load, beta=0.0), lin.v, tol=1e-9)
    energies = []
    for w in (10.0, 100.0):
        _, rep = minimize_nonlinear(nl(dom, h=0.05, load=load, mode=Penalty(w), gtol=1e-12))
        energies.append(rep.energy)
    assert energies[0] != energies[1]
    assert abs(energies[1] - e_lin) < abs(energies[0] - e_lin)


def test_init_must_satisfy_dirichlet():
    dom = unit(5)
    with pytest.raises(ValueError):
        minimize_nonlinear(nl(dom), rotation_field(dom))


def test_line_search_failure_reports_last_iterate():
    dom = unit(5)
    prob = nl(dom, h=0.1, load=shear_load(dom, 1.0), precondition=False, initial_step=1e9, max_backtracks=1)
    with pytest.raises(LineSearchError) as info:
        minimize_nonlinear(prob)
    assert isinstance(info.value.last, VectorField)


def test_outer_cycle_limit():
    dom = unit(9)
    prob = nl(dom, h=0.05, load=shear_load(dom), mode=AugmentedLagrangian(1.0), det_tol=1e-14, max_outer=1)
    with pytest.raises(ConvergenceError):
        minimize_nonlinear(prob)


# --------------------------------------------------------------------------
# shifted functionals
# --------------------------------------------------------------------------


def divfree_bump(dom, amp=0.1):
    # curl of (0, 0, s) with s = sin^2 pi x1 sin^2 pi x2: div-free, nonzero on the z faces only
    def fn(x):
        s1, s2 = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
        c1, c2 = np.cos(np.pi * x[:, 0]), np.cos(np.pi * x[:, 1])
        return amp * np.stack([2 * np.pi * s1**2 * s2 * c2, -2 * np.pi * s1 * c1 * s2**2, 0 * s1], axis=1)

    return sample(dom, fn)


def test_shift_with_zero_boundary_data_is_plain_functional():
    dom = unit(9)
    prob = LinearizedProblem(dom, H_NH, poly_load(dom, 1.0), beta=0.0)
    _, g_tilde, _ = shifted_functionals(prob, VectorField.zeros(dom))
    sol = solve_linearized(prob, tol=1e-11)
    assert g_tilde(sol.v) == linearized_energy(prob, sol.v, tol=1e-6)


@pytest.mark.parametrize("vbar_fn", [rotation_field, divfree_bump])
def test_shift_identity_and_two_routes(vbar_fn):
    dom = unit(9)
    vbar = vbar_fn(dom) * 0.1
    prob = LinearizedProblem(dom, H_NH, poly_load(dom, 1.0), beta=0.0)
    tol = 1e-10
    v0 = solve_shifted(prob, vbar, tol=tol).v
    direct = solve_linearized(prob.with_(vbar=vbar), tol=tol).v
    assert np.max(np.abs(direct.data - (v0.data + vbar.data))) <= 10 * tol
    _, g_tilde, g_bar = shifted_functionals(prob, vbar, tol=1e-6)
    assert abs(g_tilde(v0) - g_bar(v0 + vbar)) <= 1e-10


def test_nonlinear_shift_evaluator_and_consistency():
    dom = unit(9)
    vbar = rotation_field(dom, 0.01)
    prob = nl(dom, h=0.01, load=poly_load(dom, 0.01), mode=AugmentedLagrangian(1.0))
    g_h, g_tilde, _ = shifted_functionals(prob, vbar, tol=1e-6)
    lin = prob.linearized()
    v0 = solve_shifted(lin, vbar, tol=1e-12).v
    # at the shifted minimizer the nonlinear functional differs from the quadratic one by O(h)
    a = g_h(v0)
    b = g_tilde(v0)
    assert abs(a - b) <= 1e-6 * max(1.0, abs(b))


def test_shift_rejects_divergent_boundary_data():
    dom = unit(9)
    prob = LinearizedProblem(dom, H_NH, beta=0.0)
    with pytest.raises(ValueError):
        shifted_functionals(prob, sample(dom, lambda x: x - 0.5))
