"""Energy densities, stresses and the elasticity tensor at the identity."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from incompressa import materials as mat
from incompressa.materials import INF, MaterialModel, VolumetricModel

NH = MaterialModel.neo_hookean(1.0)
VOL = VolumetricModel(1.0)

MODELS = {
    "neo_hookean": NH,
    "mooney_rivlin": MaterialModel.mooney_rivlin(0.7, 0.3),
    "ogden": MaterialModel.ogden([1.2, 0.1], [1.5, 4.0]),
    "yeoh": MaterialModel.yeoh(1.0, 1.0, 1.0),
}


def random_f(rng, n, lo=0.2, hi=5.0, spread=0.4):
    """Random deformation gradients with det in [lo, hi]."""
    out = []
    while len(out) < n:
        F = np.eye(3) + spread * rng.standard_normal((3, 3))
        d = np.linalg.det(F)
        if d > 0:
            target = np.exp(rng.uniform(np.log(lo), np.log(hi)))
            out.append(F * np.cbrt(target / d))
    return out


def fd_stress(model, vol, F, step=1e-5):
    P = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            E = np.zeros((3, 3))
            E[i, j] = step
            P[i, j] = (mat.energy(model, vol, F + E) - mat.energy(model, vol, F - E)) / (2 * step)
    return P


# --------------------------------------------------------------------------
# energy and the incompressible extension
# --------------------------------------------------------------------------


def test_energy_identity_is_zero():
    for model in MODELS.values():
        assert mat.energy(model, VOL, np.eye(3)) == 0.0


def test_energy_isochoric_stretch_hand_value():
    # det = 1: only mu (tr F^T F - 3) = 5.25 - 3 survives
    F = np.diag([2.0, 0.5, 1.0])
    assert mat.energy(NH, VOL, F) == pytest.approx(2.25, rel=1e-14)


def test_energy_infinite_for_reflections():
    F = np.diag([1.0, 1.0, -1.0])
    for model in MODELS.values():
        w = mat.energy(model, VOL, F)
        assert w is INF
        assert not mat.is_finite(w)
    assert mat.energy(NH, VOL, np.zeros((3, 3))) is INF


def test_infinite_value_does_not_leak_into_arithmetic():
    assert INF > 1e308
    assert not INF < 0.0
    with pytest.raises(TypeError):
        INF + 1.0


def test_energy_incompressible():
    assert mat.energy_incompressible(NH, VOL, np.eye(3), 0.0) == 0.0
    assert mat.energy_incompressible(NH, VOL, 2 * np.eye(3), 1e-8) is INF
    F = np.diag([2.0, 0.5, 1.0])
    assert mat.energy_incompressible(NH, VOL, F, 1e-8) == pytest.approx(2.25, rel=1e-14)


def test_volumetric_model_shape():
    v = VolumetricModel(3.0)
    assert v(1.0) == 0.0
    assert v.derivative(1.0) == 0.0
    for t in (0.1, 0.5, 0.99, 1.01, 2.0, 10.0):
        assert v(t) > 0
        assert v(t) == pytest.approx(3.0 * (t * t - 1 - 2 * np.log(t)), rel=1e-12)
    with pytest.raises(mat.DomainError):
        v(0.0)


def test_volumetric_energy_accurate_near_one():
    # t^2 - 1 - 2 log t ~ 2 (t-1)^2 for small t-1; naive evaluation cancels
    j = 1e-9
    assert float(mat.volumetric_energy(1.0, np.asarray(j))) == pytest.approx(2 * j * j, rel=1e-6)


def test_nonnegative_on_samples():
    rng = np.random.default_rng(1)
    for model in MODELS.values():
        for F in random_f(rng, 200):
            assert mat.energy(model, VOL, F) >= 0.0


@pytest.mark.parametrize("bad", [dict(kind="neo_hookean", mu=(-1.0,)), dict(kind="yeoh", c=(0.0, 1.0, 1.0))])
def test_invalid_models_rejected(bad):
    with pytest.raises(ValueError):
        MaterialModel(**bad)


def test_ogden_needs_matching_lists():
    with pytest.raises(ValueError):
        MaterialModel.ogden([1.0, 2.0], [2.0])
    with pytest.raises(ValueError):
        MaterialModel.ogden([], [])


def test_from_config():
    m = MaterialModel.from_config({"model": "ogden", "mu_p": "1.0, 2.0", "alpha_p": "2, 4"})
    assert m.mu == (1.0, 2.0) and m.alpha == (2.0, 4.0)
    assert MaterialModel.from_config({"model": "NeoHookean", "mu": "0.5"}) == MaterialModel.neo_hookean(0.5)
    assert MaterialModel.from_config({"model": "yeoh", "c1": 1, "c3": 2}).c == (1.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        MaterialModel.from_config({"model": "arruda_boyce", "mu": 1})


# --------------------------------------------------------------------------
# stress
# --------------------------------------------------------------------------


def test_stress_vanishes_at_identity_and_rotations():
    rots = Rotation.random(100, random_state=3).as_matrix()
    for model in MODELS.values():
        assert np.max(np.abs(mat.stress(model, VOL, np.eye(3)))) == 0.0
        for R in rots:
            assert np.max(np.abs(mat.stress(model, VOL, R))) <= 1e-10


def test_stress_matches_finite_differences_small_shear():
    F = np.eye(3)
    F[0, 1] = 0.01
    P = mat.stress(NH, VOL, F)
    # relative to the stress magnitude: tiny diagonal entries carry FD truncation error
    assert np.max(np.abs(P - fd_stress(NH, VOL, F))) <= 1e-6 * np.max(np.abs(P))


@pytest.mark.parametrize("name", sorted(MODELS))
def test_stress_matches_finite_differences_random(name):
    rng = np.random.default_rng(7)
    for F in random_f(rng, 5, 0.5, 2.0):
        P = mat.stress(MODELS[name], VolumetricModel(2.0), F)
        np.testing.assert_allclose(P, fd_stress(MODELS[name], VolumetricModel(2.0), F), rtol=1e-6, atol=1e-7)


def test_stress_rejects_reflections():
    with pytest.raises(mat.DomainError):
        mat.stress(NH, VOL, np.diag([1.0, 1.0, -1.0]))


# --------------------------------------------------------------------------
# elasticity tensor
# --------------------------------------------------------------------------


def second_difference(model, vol, B, step=1e-4):
    """phi''(0) for phi(s) = W(I + s B), Richardson-extrapolated central differences."""

    def d2(s):
        return (mat.energy(model, vol, np.eye(3) + s * B) - 2 * mat.energy(model, vol, np.eye(3))
                + mat.energy(model, vol, np.eye(3) - s * B)) / s**2

    return (4 * d2(step / 2) - d2(step)) / 3


@pytest.mark.parametrize("name", sorted(MODELS))
def test_hessian_matches_second_differences(name):
    model = MODELS[name]
    H = mat.hessian_at_identity(model, VOL)
    rng = np.random.default_rng(11)
    Bs = [np.outer([1, 0, 0], [0, 1, 0]), np.eye(3)] + [rng.standard_normal((3, 3)) for _ in range(3)]
    for B in Bs:
        S = 0.5 * (B + B.T)
        ref = second_difference(model, VOL, S)
        assert mat.quadratic_form(H, B) == pytest.approx(ref, rel=1e-6)


def test_fd_hessian_agrees_with_analytic():
    for model in MODELS.values():
        Ha = mat.hessian_at_identity(model, VOL).matrix
        Hf = mat.hessian_at_identity(model, VOL, method="fd").matrix
        np.testing.assert_allclose(Hf, Ha, atol=1e-6 * np.max(np.abs(Ha)))


def test_hessian_symmetric_and_elliptic():
    H = mat.hessian_at_identity(NH, VOL)
    assert np.array_equal(H.matrix, H.matrix.T)
    assert H.min_eigenvalue > 0


def test_quadratic_form_basics():
    H = mat.hessian_at_identity(NH, VOL)
    assert mat.quadratic_form(H, np.zeros((3, 3))) == 0.0
    W = np.array([[0, 1, 2], [-1, 0, 3], [-2, -3, 0]], float)
    assert mat.quadratic_form(H, W) == 0.0
    B = np.outer([1, 0, 0], [0, 1, 0])
    assert mat.quadratic_form(H, B) == mat.quadratic_form(H, B.T)


def test_quadratic_form_dense_contraction_oracle():
    # rebuild the fourth-order tensor from the isotropic moduli and contract directly
    H = mat.hessian_at_identity(NH, VOL)
    G, k = NH.shear_modulus, 4 * VOL.c
    d = np.eye(3)
    C = (G * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
         + (k - 2 * G / 3) * np.einsum("ij,kl->ijkl", d, d))
    rng = np.random.default_rng(2)
    for B in [np.eye(3)] + [rng.standard_normal((3, 3)) for _ in range(5)]:
        S = 0.5 * (B + B.T)
        assert mat.quadratic_form(H, B) == pytest.approx(np.einsum("ij,ijkl,kl", S, C, S), rel=1e-13)


def test_volumetric_invariance_on_trace_free_directions():
    rng = np.random.default_rng(5)
    for model in MODELS.values():
        h1 = mat.hessian_at_identity(model, VolumetricModel(1.0))
        h10 = mat.hessian_at_identity(model, VolumetricModel(10.0))
        for _ in range(100):
            B = rng.standard_normal((3, 3))
            B = 0.5 * (B + B.T)
            B -= np.trace(B) / 3 * np.eye(3)
            assert abs(mat.quadratic_form(h1, B) - mat.quadratic_form(h10, B)) <= 1e-9


def test_mandel_round_trip_and_inner_product():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    A = A + A.T
    B = rng.standard_normal((3, 3))
    B = B + B.T
    np.testing.assert_allclose(mat.from_mandel(mat.to_mandel(A)), A, atol=1e-15)
    assert mat.to_mandel(A) @ mat.to_mandel(B) == pytest.approx(np.sum(A * B), rel=1e-14)


# --------------------------------------------------------------------------
# reductions, growth, gauges
# --------------------------------------------------------------------------


def det_one(rng, n):
    return [F / np.cbrt(np.linalg.det(F)) for F in random_f(rng, n)]


def test_ogden_reduces_to_neo_hookean():
    rng = np.random.default_rng(4)
    mu = 0.8
    og = MaterialModel.ogden([2 * mu], [2.0])
    nh = MaterialModel.neo_hookean(mu)
    for F in det_one(rng, 100):
        assert abs(mat.energy(og, VOL, F) - mat.energy(nh, VOL, F)) <= 1e-12 * max(1.0, mat.energy(nh, VOL, F))


def test_ogden_two_term_matches_mooney_rivlin():
    rng = np.random.default_rng(6)
    mr = MaterialModel.mooney_rivlin(0.7, 0.3)
    og = mr.as_ogden()
    assert og.alpha == (2.0, -2.0)
    for F in random_f(rng, 100):
        assert mat.energy(og, VOL, F) == pytest.approx(mat.energy(mr, VOL, F), rel=1e-12, abs=1e-13)


def test_ogden_growth_is_subquadratic():
    og = MaterialModel.ogden([1.0], [1.5])
    lam = np.geomspace(10, 1000, 20)
    F = [np.diag([l**-2, l, l]) for l in lam]
    W = [mat.energy(og, VOL, f) for f in F]
    d = [mat.distance_to_so3(f) for f in F]
    slope = np.polyfit(np.log(d), np.log(W), 1)[0]
    assert 1.0 < slope < 2.0
    assert slope == pytest.approx(1.5, abs=0.05)


def test_distance_to_so3():
    R = Rotation.from_rotvec([0.3, -0.2, 0.5]).as_matrix()
    assert mat.distance_to_so3(R) == pytest.approx(0.0, abs=1e-14)
    assert mat.distance_to_so3(2 * R) == pytest.approx(np.sqrt(3.0), rel=1e-14)
    # reflection: nearest rotation flips one axis
    assert mat.distance_to_so3(np.diag([1.0, 1.0, -1.0])) == pytest.approx(2.0, rel=1e-14)


def test_gp_values_and_errors():
    assert mat.gp(1.5, 1.0) == 1.0
    assert mat.gp(1.5, 2.0) == pytest.approx(2 * 2**1.5 / 1.5 - 2 / 1.5 + 1, rel=1e-15)
    assert mat.gp(1.5, 2.0) == pytest.approx(3.4379, abs=1e-4)
    assert mat.gp(2.0, 3.0) == pytest.approx(9.0, rel=1e-15)
    for p, t in [(1.0, 1.0), (2.5, 1.0), (1.5, -0.1)]:
        with pytest.raises(mat.DomainError):
            mat.gp(p, t)


@pytest.mark.parametrize("p", [1.1, 1.5, 1.8, 2.0])
def test_gp_midpoint_convex(p):
    t = np.linspace(0, 5, 41)
    for s in t:
        for u in t:
            assert mat.gp(p, 0.5 * (s + u)) <= 0.5 * (mat.gp(p, s) + mat.gp(p, u)) + 1e-12


def test_coercivity_check():
    prof = mat.CoercivityProfile(1.8, 0.01)
    rep = mat.coercivity_check(NH, VOL, prof, [np.eye(3), Rotation.from_rotvec([0, 0, 1]).as_matrix()])
    assert rep.ok and rep.min_margin == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(9)
    rep = mat.coercivity_check(NH, VOL, prof, random_f(rng, 1000, 0.5, 2.0))
    assert rep.ok and rep.violations == []
    # a huge constant must produce violations, reported as data
    rep = mat.coercivity_check(NH, VOL, mat.CoercivityProfile(1.8, 100.0), random_f(rng, 10, 0.5, 2.0))
    assert not rep.ok
    with pytest.raises(ValueError):
        mat.CoercivityProfile(0.9, 1.0)


def test_frame_indifference():
    rng = np.random.default_rng(12)
    Rs = Rotation.random(1000, random_state=13).as_matrix()
    Fs = random_f(rng, 1000, spread=0.15)
    for model in MODELS.values():
        worst = max(mat.frame_indifference_check(model, VOL, F, R) for F, R in zip(Fs, Rs))
        assert worst <= 1e-10
    # wide samples reach energies ~1e8 (Yeoh); there only round-off relative to W is meaningful
    Fs = random_f(rng, 1000)
    for model in MODELS.values():
        worst = max(mat.frame_indifference_check(model, VOL, F, R) / max(1.0, mat.energy(model, VOL, F))
                    for F, R in zip(Fs, Rs))
        assert worst <= 1e-12
    assert mat.frame_indifference_check(NH, VOL, np.eye(3), np.eye(3)) == 0.0
    R = Rotation.from_rotvec([0, 0, np.pi / 3]).as_matrix()
    assert mat.frame_indifference_check(MODELS["yeoh"], VOL, np.diag([2, 0.5, 1]), R) <= 1e-10
    with pytest.raises(mat.DomainError):
        mat.frame_indifference_check(NH, VOL, np.eye(3), 2 * np.eye(3))


def test_predicates():
    assert mat.is_rotation(Rotation.from_rotvec([1, 2, 3]).as_matrix())
    assert not mat.is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert mat.det_positive(np.eye(3)) and not mat.det_positive(-np.eye(3))
