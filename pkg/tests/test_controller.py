import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpv_lanekeep.controller import (ConfigurationError, FixedGainController, LtiBaseline,
                                     ScheduledController, SynthesisConfig, SynthesisError,
                                     SynthesisResult, estimate_gamma, pair_indices, phi_block,
                                     scale_system, scheduled_gain, synthesize_vertex_gains,
                                     verify_theorem1)
from lpv_lanekeep.polytope import membership
from lpv_lanekeep.scheduling import assemble_system, build_theta, reduce_point
from lpv_lanekeep.vehicle_model import VehicleParams

P = VehicleParams()


def two_speed_systems():
    return [assemble_system(build_theta(v, P.C_af0, P.C_ar0), P) for v in (15.0, 25.0)]


@pytest.fixture(scope="module")
def small_design():
    cfg = SynthesisConfig(alpha=2.0, gamma=0.0)
    systems = two_speed_systems()
    K, Y = synthesize_vertex_gains(systems, cfg)
    return systems, cfg, K, Y


def test_pair_indices_count():
    for n in range(1, 6):
        pairs = pair_indices(n)
        assert len(pairs) == n * (n + 1) // 2
        assert all(p <= q for p, q in pairs)


def test_config_validation_and_design_alpha():
    assert SynthesisConfig(alpha=3.0).design_alpha == 3.5
    assert SynthesisConfig(alpha=3.0, synth_alpha=5.0).design_alpha == 5.0
    np.testing.assert_allclose(np.diag(SynthesisConfig().scaling), [2, 1, 20, 10])
    for bad in ({"alpha": 0.0}, {"gamma": -1.0}, {"gain_cap": 0.0}, {"block22": "x"},
                {"state_scale": (1.0, 1.0, 1.0)}):
        with pytest.raises(ValueError):
            SynthesisConfig(**bad)


def test_scale_system_similarity_preserves_spectrum():
    g = two_speed_systems()[0]
    S = np.diag([2.0, 1.0, 20.0, 10.0])
    gs = scale_system(g, S)
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(gs.A)),
                               np.sort_complex(np.linalg.eigvals(g.A)), atol=1e-9)
    np.testing.assert_allclose(gs.B, S @ g.B)


def test_vertex_gains_meet_design_decay(small_design):
    systems, cfg, K, Y = small_design
    assert K.shape == (2, 4)
    assert np.linalg.eigvalsh(Y)[0] >= 1 - 1e-6
    S = cfg.scaling
    Ks = K @ np.linalg.inv(S)
    assert np.max(np.linalg.norm(Ks, axis=1)) <= cfg.gain_cap + 1e-9
    # Y^-1 is a common Lyapunov matrix of every frozen vertex loop
    Pm = np.linalg.inv(Y)
    for p, g in enumerate(systems):
        gs = scale_system(g, S)
        Acl = gs.A + gs.B @ Ks[p][None, :]
        lam = np.linalg.eigvalsh(Acl.T @ Pm + Pm @ Acl + cfg.design_alpha * Pm)[-1]
        assert lam < 0
        assert np.max(np.linalg.eigvals(g.A + g.B @ K[p][None, :]).real) < -cfg.design_alpha / 2 + 1e-9


@given(st.floats(0, 1))
def test_frozen_convex_combinations_are_stable(w):
    systems = two_speed_systems()
    cfg = SynthesisConfig(alpha=2.0, gamma=0.0)
    K, _ = _cached_gains(systems, cfg)
    xi = np.array([w, 1 - w])
    A = sum(x * g.A for x, g in zip(xi, systems))
    B = sum(x * g.B for x, g in zip(xi, systems))
    Acl = A + B @ scheduled_gain(xi, K)[None, :]
    assert np.max(np.linalg.eigvals(Acl).real) < 0


_GAINS = {}


def _cached_gains(systems, cfg):
    if "k" not in _GAINS:
        _GAINS["k"] = synthesize_vertex_gains(systems, cfg)
    return _GAINS["k"]


def test_certificate_found_and_margins_negative(small_design):
    systems, _, K, Y = small_design
    cfg = SynthesisConfig(alpha=2.0, gamma=0.01)
    res = verify_theorem1(systems, K, cfg, Y=Y)
    assert res.feasible
    assert set(res.margins) == {"Phi11", "Phi12+Phi21", "Phi22"}
    assert all(v < 0 for v in res.margins.values())
    assert res.tau >= 0 and np.linalg.eigvalsh(res.P)[0] >= 1 - 1e-6
    # independent recheck of one diagonal block in scaled coordinates
    S = cfg.scaling
    gs = scale_system(systems[0], S)
    Acl = gs.A + gs.B @ (K[0] @ np.linalg.inv(S))[None, :]
    lam = np.linalg.eigvalsh(phi_block(Acl, res.P, res.tau, cfg.alpha, cfg.gamma))[-1]
    assert lam == pytest.approx(res.margins["Phi11"], abs=1e-8)


def test_certificate_failure_raises_with_margins(small_design):
    systems, _, K, _ = small_design
    cfg = SynthesisConfig(alpha=200.0, gamma=0.01, budget=1500)
    with pytest.raises(SynthesisError) as err:
        verify_theorem1(systems, K, cfg)
    assert err.value.margins and err.value.worst is not None
    res = verify_theorem1(systems, K, cfg, raise_on_failure=False)
    assert not res.feasible


def test_synthesis_failure_raises():
    cfg = SynthesisConfig(alpha=500.0, gain_cap=0.5, budget=1500)
    with pytest.raises(SynthesisError):
        synthesize_vertex_gains(two_speed_systems(), cfg)


def test_phi_block_structure():
    A = np.array([[-1.0, 0.0], [1.0, -2.0]])
    Pm = np.array([[2.0, 0.5], [0.5, 1.0]])
    M = phi_block(A, Pm, tau=3.0, alpha=0.5, gamma=0.1)
    np.testing.assert_allclose(M, M.T)
    np.testing.assert_allclose(M[:2, :2], A.T @ Pm + Pm @ A + 0.5 * Pm + 3.0 * 0.01 * np.eye(2))
    np.testing.assert_array_equal(M[:2, 2:], Pm)
    np.testing.assert_array_equal(M[2:, 2:], -3.0 * np.eye(2))
    np.testing.assert_array_equal(phi_block(A, Pm, 3.0, 0.5, 0.1, "gamma")[2:, 2:], -0.1 * np.eye(2))


@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4).filter(lambda w: sum(w) > 1e-3))
def test_scheduled_gain_is_convex_combination(w):
    K = np.arange(16.0).reshape(4, 4) - 5.0
    xi = np.array(w) / sum(w)
    k = scheduled_gain(xi, K)
    assert np.all(k >= K.min(axis=0) - 1e-12) and np.all(k <= K.max(axis=0) + 1e-12)
    np.testing.assert_allclose(k, sum(x * row for x, row in zip(xi, K)))


def test_fixed_gain_controller_saturates():
    ctrl = FixedGainController([1.0, 0.0, 0.0, 0.0], delta_max=0.2)
    assert ctrl(np.array([0.1, 0, 0, 0]), None)[0] == pytest.approx(0.1)
    assert ctrl(np.array([5.0, 0, 0, 0]), None)[0] == 0.2
    assert ctrl(np.array([-5.0, 0, 0, 0]), None)[0] == -0.2


def test_synthesis_result_text_roundtrip(small_design):
    systems, _, K, Y = small_design
    res = verify_theorem1(systems, K, SynthesisConfig(alpha=2.0, gamma=0.01), Y=Y)
    res.provenance = "abc123"
    back = SynthesisResult.from_text(res.to_text())
    np.testing.assert_array_equal(back.K, res.K)
    np.testing.assert_array_equal(back.P, res.P)
    assert back.margins == res.margins and back.eps == res.eps
    assert (back.tau, back.alpha, back.gamma, back.provenance) == (res.tau, 2.0, 0.01, "abc123")
    assert back.to_text() == res.to_text()


def test_lti_baseline_text_roundtrip():
    theta = build_theta(50 / 3.6, P.C_af0, P.C_ar0)
    base = LtiBaseline(np.array([0.1, 0.2, -0.3, 0.4]), theta, assemble_system(theta, P),
                       50 / 3.6, P.C_af0, P.C_ar0)
    back = LtiBaseline.from_text(base.to_text(), P)
    np.testing.assert_array_equal(back.K, base.K)
    np.testing.assert_array_equal(back.theta, base.theta)
    assert back.system.max_abs_diff(base.system) == 0.0


# --- default pipeline ---------------------------------------------------------

def test_default_vertex_loops_stable(default_pipeline):
    p = default_pipeline
    K = p.design.gains.K
    for g, k in zip(p.poly.vertex_systems, K):
        assert np.max(np.linalg.eigvals(g.A + g.B @ k[None, :]).real) < 0
    assert p.design.gains.feasible
    assert max(p.design.gains.margins.values()) < 0


def test_scheduled_controller_matches_manual_law(default_pipeline):
    p = default_pipeline
    ctrl = ScheduledController(p.reduction, p.poly, p.design.gains, delta_max=10.0)
    theta = p.traj.samples[:, 1234]
    x = np.array([0.1, -0.05, 0.01, 0.02])
    delta, eta, xi, _ = ctrl(x, theta)
    eta_ref = reduce_point(theta, p.reduction)
    np.testing.assert_allclose(eta, eta_ref, atol=1e-10)
    xi_ref, _ = membership(p.poly, eta_ref)
    assert delta == pytest.approx(scheduled_gain(xi_ref, p.design.gains.K) @ x, abs=1e-10)


def test_provenance_mismatch_rejected(default_pipeline):
    p = default_pipeline
    wrong = dataclasses.replace(p.design.gains, provenance="0000000000000000")
    with pytest.raises(ConfigurationError):
        ScheduledController(p.reduction, p.poly, wrong)
    fewer = dataclasses.replace(p.design.gains, K=p.design.gains.K[:2], provenance="")
    with pytest.raises(ConfigurationError):
        ScheduledController(p.reduction, p.poly, fewer)


def test_gamma_vanishes_without_reduction_error(default_pipeline):
    # with every direction kept the reconstruction is exact up to rounding
    from lpv_lanekeep.polytope import Polytope
    from lpv_lanekeep.scheduling import normalize, pca_reduce
    p = default_pipeline
    s = p.traj.samples[:, ::20]
    n, law = normalize(s)
    red5 = pca_reduce(n, 5, law)
    # any simplex around the unit box will do: with zero gains only dA matters
    poly5 = Polytope(np.hstack([np.full((5, 1), -10.0), -10.0 + 100.0 * np.eye(5)]))
    K = np.zeros((poly5.n_vertices, 4))
    g = estimate_gamma(s, red5, poly5, K, P, stride=5, state_scale=(0.5, 1.0, 0.05, 0.1))
    assert g < 1e-6
    assert estimate_gamma(s, p.reduction, p.poly, p.design.gains.K, P, stride=5) > 0


def test_scheduled_double_sum_negative_definite(default_pipeline):
    # sum_p sum_q xi_p xi_q Phi_pq < 0 at random weights, with the certified P and tau
    p = default_pipeline
    g = p.design.gains
    cfg = p.settings.synthesis
    S = cfg.scaling
    systems = [scale_system(s, S) for s in p.poly.vertex_systems]
    Ks = g.K @ np.linalg.inv(S)
    n = len(systems)
    rng = np.random.default_rng(4)
    for xi in rng.dirichlet(np.ones(n), size=100):
        M = sum(xi[a] * xi[b] * phi_block(systems[a].A + systems[a].B @ Ks[b][None, :],
                                          g.P, g.tau, g.alpha, g.gamma)
                for a in range(n) for b in range(n))
        assert np.linalg.eigvalsh(M)[-1] < 0
