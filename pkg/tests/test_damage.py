import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisodamage import damage as dm
from anisodamage import micromorphic as mm
from anisodamage.hyperelastic import NonPositiveJacobian, neo_hooke_energy, neo_hooke_stress, \
    neo_hooke_tangent
from anisodamage.tensor import positive_part
from anisodamage.verify import fd_symmetric

from .conftest import damage_tensors, deformations, random_C, random_D

SET1 = dm.MaterialParams.set1()
SET2 = dm.MaterialParams.set2()


def uniaxial(lam):
    return np.diag([lam ** 2, 1.0, 1.0])


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def test_presets_follow_table():
    assert (SET1.elastic.lam, SET1.elastic.mu, SET1.Y0, SET1.r_d) == (5000, 7500, 10, 10)
    assert (SET2.elastic.lam, SET2.elastic.mu, SET2.Y0, SET2.r_d) == (25000, 55000, 2.5, 5)
    for p in (SET1, SET2):
        assert (p.e_d, p.f_d, p.c_d, p.H_d, p.s_d, p.K_h, p.n_h) == (2, 1, 1, 1, 100, 0.1, 2)
    assert SET1.H_i == 0 and SET1.A_i == 0


def test_parameter_validation_and_roundtrip():
    with pytest.raises(ValueError):
        SET1.with_(k_ani=1.5)
    with pytest.raises(ValueError):
        SET1.with_(n_h=1.0)
    p = SET2.with_(H_i=(1.0, 2.0), k_ani=0.3)
    assert dm.MaterialParams.from_dict(p.as_dict()) == p
    np.testing.assert_array_equal(p.penalties("C"), [1.0, 2.0])
    with pytest.raises(mm.DimensionMismatch):
        p.penalties("B")


# ---------------------------------------------------------------------------
# degradation and energies
# ---------------------------------------------------------------------------

def test_degradation_examples(rng):
    C = random_C(rng)
    assert dm.f_iso(np.zeros((3, 3)), SET1) == 1.0
    assert dm.f_iso(np.eye(3), SET1) == pytest.approx(0.0, abs=1e-15)
    assert dm.f_iso(np.diag([0.3, 0, 0]), SET1) == pytest.approx(0.81)
    assert dm.f_ani(C, np.zeros((3, 3)), SET1) == 1.0
    assert dm.f_ani(C, np.eye(3), SET1) == pytest.approx(0.0, abs=1e-14)
    ref = 1 - 0.5 * 1.44 ** 2 / (1.44 ** 2 + 2)
    assert dm.f_ani(np.diag([1.44, 1, 1]), np.diag([0.5, 0, 0]), SET1) == pytest.approx(ref)


def test_elastic_energy_limits_and_mixture(rng):
    C, D = random_C(rng), random_D(rng)
    psi = neo_hooke_energy(C, SET1.elastic)
    assert dm.psi_e(C, np.zeros((3, 3)), SET1) == pytest.approx(psi, rel=1e-14)
    assert dm.psi_e(C, np.eye(3), SET1) == pytest.approx(0.0, abs=1e-9)
    half = dm.psi_e(C, D, SET1.with_(k_ani=0.5))
    ref = 0.5 * (dm.f_iso(D, SET1) + dm.f_ani(C, D, SET1)) * psi
    assert half == pytest.approx(ref, rel=1e-13)


def test_stress_examples(rng):
    D = random_D(rng)
    np.testing.assert_allclose(dm.stress(np.eye(3), D, SET1), 0.0, atol=1e-10)
    C = random_C(rng)
    np.testing.assert_array_equal(dm.stress(C, np.zeros((3, 3)), SET1),
                                  neo_hooke_stress(C, SET1.elastic))
    with pytest.raises(NonPositiveJacobian):
        dm.stress(np.diag([1.0, 1.0, 0.0]), D, SET1)


@pytest.mark.parametrize("k_ani", [0.0, 0.4, 1.0])
def test_stress_and_forces_match_fd(k_ani, rng):
    p = SET1.with_(k_ani=k_ani, e_d=1.7, f_d=2.3)
    for _ in range(15):
        C, D = random_C(rng), random_D(rng)
        S = dm.stress(C, D, p)
        fd = 2 * fd_symmetric(lambda c: dm.psi_e(c, D, p), C)
        assert np.abs(S - fd).max() <= 1e-6 * np.abs(S).max()
        Ye = dm.driving_force_elastic(C, D, p)
        fd = -fd_symmetric(lambda d: dm.psi_e(C, d, p), D)
        assert np.abs(Ye - fd).max() <= 1e-6 * max(1.0, np.abs(Ye).max())
        g = dm.dfani_dC(C, D, p)
        fd = fd_symmetric(lambda c: dm.f_ani(c, D, p), C)
        assert np.abs(g - fd).max() <= 1e-7 * max(1.0, np.abs(g).max())
        for fun, ana in ((lambda d: dm.f_iso(d, p), dm.dfiso_dD(D, p)),
                         (lambda d: dm.f_ani(C, d, p), dm.dfani_dD(C, D, p))):
            assert np.abs(ana - fd_symmetric(fun, D)).max() <= 1e-6 * max(1.0, np.abs(ana).max())


def test_dfani_dC_closed_form(rng):
    p = SET1.with_(f_d=1.6)
    C, D = random_C(rng), random_D(rng)
    C2 = C @ C
    t = np.trace(C2)
    x = np.trace(C2 @ D) / t
    ref = p.f_d * (1 - x) ** (p.f_d - 1) * (-(D @ C + C @ D) / t + np.trace(C2 @ D) * 2 * C / t ** 2)
    np.testing.assert_allclose(dm.dfani_dC(C, D, p), ref, rtol=1e-12, atol=1e-14)


@given(deformations())
def test_dfani_dC_vanishes_on_boundaries(F):
    C = F.T @ F
    assert np.abs(dm.dfani_dC(C, np.zeros((3, 3)), SET1)).max() < 1e-12
    assert np.abs(dm.dfani_dC(C, np.eye(3), SET1)).max() < 1e-12


def test_elastic_force_isotropic_closed_form(rng):
    p = SET1.with_(k_ani=0.0)
    C, D = random_C(rng), random_D(rng)
    psi = neo_hooke_energy(C, p.elastic)
    ref = (2 / 3) * (1 - np.trace(D) / 3) * psi * np.eye(3)
    np.testing.assert_allclose(dm.driving_force_elastic(C, D, p), ref, rtol=1e-12)
    np.testing.assert_allclose(dm.driving_force_elastic(np.eye(3), D, SET1), 0.0, atol=1e-12)


@given(deformations(), damage_tensors(), st.sampled_from([0.0, 0.5, 1.0]))
def test_elastic_force_psd(F, D, k):
    Ye = dm.driving_force_elastic(F.T @ F, D, SET1.with_(k_ani=k))
    assert np.linalg.eigvalsh(Ye).min() >= -1e-9 * max(1.0, np.abs(Ye).max())


# ---------------------------------------------------------------------------
# hardening
# ---------------------------------------------------------------------------

def test_kinematic_force_examples():
    np.testing.assert_array_equal(dm.driving_force_kinematic(np.zeros((3, 3)), SET1), 0.0)
    Yh = dm.driving_force_kinematic(np.diag([0.5, 0, 0]), SET1)
    np.testing.assert_allclose(Yh, np.diag([0.1 * (np.sqrt(2) - 1), 0, 0]), atol=1e-15)


def test_kinematic_taylor_branch_continuity():
    p = SET1.with_(a_h=0.9)
    P = p.vector()
    a = 0.9
    eps = 1e-7
    smooth = lambda x: (1 - x) ** -0.5 - 1  # noqa: E731
    assert dm.kinematic_scalar_k(a, P) == pytest.approx(smooth(a), rel=1e-12)
    right = (dm.kinematic_scalar_k(a + eps, P) - dm.kinematic_scalar_k(a, P)) / eps
    left = (smooth(a) - smooth(a - eps)) / eps
    assert right == pytest.approx(left, rel=1e-5)
    # value and slope of the two branches agree at the sampling point
    d_smooth = 0.5 * (1 - a) ** -1.5
    d_taylor = (dm.kinematic_scalar_k(a + 1e-9, P) - dm.kinematic_scalar_k(a, P)) / 1e-9
    assert abs(d_taylor - d_smooth) / d_smooth < 1e-6
    # finite beyond the singularity
    assert np.isfinite(dm.kinematic_scalar_k(1.5, P))


def test_kinematic_force_is_energy_gradient(rng):
    for a_h in (0.999999, 0.5):
        p = SET1.with_(a_h=a_h)
        for _ in range(10):
            D = random_D(rng, upper=0.9)
            Yh = dm.driving_force_kinematic(D, p)
            fd = fd_symmetric(lambda d: dm.psi_h(d, p), D)
            assert np.abs(Yh - fd).max() <= 1e-6 * max(1.0, np.abs(Yh).max())
            assert np.linalg.eigvalsh(Yh).min() >= -1e-14


def test_isotropic_hardening_examples():
    assert dm.hardening_force(0.0, SET1) == 0.0
    assert dm.hardening_force(0.01, SET1) == pytest.approx(-(10 * (1 - np.exp(-1)) + 0.01))
    assert dm.hardening_force(50.0, SET1.with_(H_d=0.0)) == pytest.approx(-10.0)
    xs = np.linspace(0, 1, 50)
    assert np.all(np.diff([dm.hardening_force(x, SET1) for x in xs]) < 0)
    h = 1e-6
    for x in (0.002, 0.01, 0.3):
        fd = -(dm.psi_d(x + h, SET1) - dm.psi_d(x - h, SET1)) / (2 * h)
        assert dm.hardening_force(x, SET1) == pytest.approx(fd, rel=1e-7)


# ---------------------------------------------------------------------------
# onset
# ---------------------------------------------------------------------------

def test_interaction_tensor_examples(rng):
    Y = random_D(rng) - 0.3 * np.eye(3)
    from anisodamage.tensor import apply4
    np.testing.assert_allclose(dm.interaction_tensor(np.zeros((3, 3)), SET1), np.eye(6), atol=1e-15)
    D = np.diag([0.5, 0, 0])
    B = np.eye(3) - D
    np.testing.assert_allclose(apply4(dm.interaction_tensor(D, SET1), Y), B @ Y @ B, atol=1e-14)
    p = SET1.with_(c_d=2.0)
    np.testing.assert_allclose(apply4(dm.interaction_tensor(D, p), Y), B @ B @ Y @ B @ B,
                               atol=1e-14)


@given(damage_tensors(), damage_tensors())
def test_interaction_tensor_keeps_psd(D, Y):
    from anisodamage.tensor import apply4
    out = apply4(dm.interaction_tensor(D, SET1), Y)
    assert np.linalg.eigvalsh(out).min() >= -1e-12


def test_onset_examples(rng):
    assert dm.onset_function(np.zeros((3, 3)), np.zeros((3, 3)), 0.0, SET1) == -10.0
    assert dm.onset_function(-np.eye(3), random_D(rng), 0.0, SET1) == -10.0
    y = 7.0
    val = dm.onset_function(np.diag([y, 0, 0]), np.zeros((3, 3)), 0.02, SET1.with_(c_d=3.0))
    assert val == pytest.approx(np.sqrt(3) * y - (10 - dm.hardening_force(0.02, SET1)))


def test_onset_brute_force(rng):
    for _ in range(20):
        Y = 20 * (random_D(rng) - 0.4 * np.eye(3))
        D = random_D(rng)
        p = SET1.with_(c_d=1.5)
        w, v = np.linalg.eigh(np.eye(3) - D)
        B = v @ np.diag(w ** 1.5) @ v.T
        Yp = positive_part(Y)
        ref = np.sqrt(3 * np.sum(Yp * (B @ Yp @ B))) - p.Y0
        assert dm.onset_function(Y, D, 0.0, p) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_flow_direction_psd_for_psd_driving_force(rng):
    for _ in range(50):
        Y = 10 * random_D(rng)
        N = dm.flow_direction(Y, random_D(rng), 0.0, SET1)
        assert np.linalg.eigvalsh(N).min() >= -1e-12


def test_flow_direction_continuous_across_zero_eigenvalue(rng):
    # non-coaxial B: the exact gradient jumps when an eigenvalue of Y crosses zero
    p = SET1.with_(c_d=1.5)
    D = random_D(rng, 0.9)
    Q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    scale = 3600.0
    dirs = [dm.flow_direction(Q @ np.diag([lam, 500.0, scale]) @ Q.T, D, 0.0, p)
            for lam in scale * np.array([-1e-10, 1e-10, 2e-6])]
    gap = np.abs(dirs[1] - dirs[0]).max() / np.abs(dirs[0]).max()
    assert gap < 1e-6
    # above the ramp the exact derivative of the positive part applies
    Y = Q @ np.diag([2e-6 * scale, 500.0, scale]) @ Q.T
    fd = fd_symmetric(lambda X: dm.onset_function(X, D, 0.0, p), Y, 1e-8)
    assert np.abs(dirs[2] - fd).max() <= 1e-5 * np.abs(fd).max()


# ---------------------------------------------------------------------------
# return mapping
# ---------------------------------------------------------------------------

def test_reference_state_is_elastic(rng):
    D = random_D(rng, 0.5)
    dbar = mm.tuple_value(D, "C")
    st_, r = dm.point_update(np.eye(3), dbar, dm.InternalState(D, 0.1), 0.01, SET1, "C")
    assert r.dgamma == 0.0
    np.testing.assert_array_equal(st_.D, D)
    np.testing.assert_allclose(r.S, 0.0, atol=1e-10)
    assert r.phi <= 0.0


def test_point_update_errors():
    with pytest.raises(NonPositiveJacobian):
        dm.point_update(np.diag([1, 1, -1.0]), [0, 0], dm.InternalState(), 0.1, SET1, "C")
    with pytest.raises(mm.DimensionMismatch):
        dm.point_update(np.eye(3), [0, 0, 0], dm.InternalState(), 0.1, SET1, "C")
    with pytest.raises(ValueError):
        dm.point_update(np.eye(3), [0, 0], dm.InternalState(), 0.0, SET1, "C")


def drive(p, kind="C", lams=np.linspace(1.0, 1.2, 41), dt=0.01, dbar=None):
    state = dm.InternalState()
    out = []
    for lam in lams:
        db = np.zeros(mm.ModelKind.parse(kind).n_dofs) if dbar is None else dbar
        new, r = dm.point_update(uniaxial(lam), db, state, dt, p, kind, tangent=False)
        out.append((state, new, r))
        state = new
    return out


def test_monotonic_stretch_grows_damage():
    hist = drive(SET1)
    damaging = [(old, new) for old, new, r in hist if r.dgamma > 0]
    assert len(damaging) > 10
    for old, new in damaging:
        assert np.trace(new.D) > np.trace(old.D)
        assert new.xi > old.xi
        assert np.all(np.linalg.eigvalsh(new.D) >= np.linalg.eigvalsh(old.D) - 1e-12)
        assert np.linalg.eigvalsh(new.D).max() < 1.0


@pytest.mark.parametrize("p", [SET1, SET2.with_(H_i=0.0, A_i=0.0), SET1.with_(k_ani=0.0)])
def test_discrete_kkt_and_dissipation(p):
    dt = 0.01
    for old, new, r in drive(p, lams=np.linspace(1.0, 1.25, 51), dt=dt):
        assert r.dgamma >= 0.0
        over = r.phi - p.eta_v * r.dgamma / dt
        assert r.phi <= p.eta_v * r.dgamma / dt + 1e-8 * p.Y0
        assert abs(r.dgamma * over) <= 1e-8 * p.Y0 * max(r.dgamma, 1e-12)
        diss = np.sum(r.Y * (new.D - old.D)) + r.R_d * (new.xi - old.xi)
        assert diss >= -1e-10


def test_inviscid_limit_consistency():
    p = SET1.with_(eta_v=0.0)
    hist = drive(p)
    assert any(r.dgamma > 0 for _, _, r in hist)
    for _, _, r in hist:
        if r.dgamma > 0:
            assert abs(r.phi) <= 1e-8 * p.Y0


def test_damage_never_heals_under_unloading():
    # unloading well below the last stretch (the viscous overstress would let
    # damage creep on at a held stretch)
    lams = np.concatenate([np.linspace(1, 1.15, 30), [1.08, 1.05, 1.02, 1.0]])
    hist = drive(SET1, lams=lams)
    D_peak = hist[29][1].D
    for _, new, r in hist[30:]:
        assert r.dgamma == 0.0
        np.testing.assert_array_equal(new.D, D_peak)


# ---------------------------------------------------------------------------
# tangents
# ---------------------------------------------------------------------------

def test_elastic_tangent_is_neo_hooke(rng):
    C = np.diag([1.0005, 0.9998, 1.0001])
    r = dm.consistent_tangent(C, [0.0, 0.0], dm.InternalState(), 0.01, SET1, "C")
    assert r.dgamma == 0.0
    K = neo_hooke_tangent(C, SET1.elastic)
    assert np.abs(2 * r.dS_dC - K).max() <= 1e-6 * np.abs(K).max()
    np.testing.assert_array_equal(r.dS_ddbar, 0.0)
    _, r2 = dm.point_update(C, [0.0, 0.0], dm.InternalState(), 0.01, SET1, "C")
    assert np.abs(2 * r2.dS_dC - K).max() <= 1e-10 * np.abs(K).max()


def damaging_point():
    p = SET2.with_(H_i=1e4)
    state = dm.InternalState(np.diag([0.2, 0.05, 0.0]), 0.1)
    C = np.array([[1.22, 0.02, 0.01], [0.02, 1.0, 0.005], [0.01, 0.005, 0.99]])
    return C, np.array([0.05, 0.01]), state, 0.01, p


def test_richardson_check_of_fd_tangent():
    C, dbar, state, dt, p = damaging_point()
    a = dm.consistent_tangent(C, dbar, state, dt, p, "C", rel_step=1e-6)
    b = dm.consistent_tangent(C, dbar, state, dt, p, "C", rel_step=1e-7)
    assert a.dgamma > 0
    for name in ("dS_dC", "dS_ddbar", "dxi0_dC", "dxi0_ddbar"):
        x, y = getattr(a, name), getattr(b, name)
        assert np.abs(x - y).max() <= 1e-4 * np.abs(x).max(), name


@pytest.mark.parametrize("kind", ["A", "B", "C"])
def test_implicit_tangent_matches_fd_tangent(kind):
    C, _, state, dt, p = damaging_point()
    dbar = mm.tuple_value(state.D, kind) + 0.01
    _, r = dm.point_update(C, dbar, state, dt, p, kind)
    ref = dm.consistent_tangent(C, dbar, state, dt, p, kind)
    assert r.dgamma > 0
    for name in ("dS_dC", "dS_ddbar", "dxi0_dC", "dxi0_ddbar"):
        x, y = getattr(r, name), getattr(ref, name)
        assert np.abs(x - y).max() <= 1e-5 * max(np.abs(y).max(), 1e-8), name
