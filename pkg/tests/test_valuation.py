import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contribdag.analysis import dominant_cluster_instance
from contribdag.errors import AlignmentViolationError, BoundViolationError, TooManyAgentsError
from contribdag.valuation import (
    approx_contribution,
    bound_certificate,
    coalition_utility,
    exact_shapley,
    ranking_stable,
    stable_pairs,
    stability_threshold,
)

R2 = 1 / math.sqrt(2)


def permutation_shapley(rs):
    """Average marginal contribution over all N! arrival orders."""
    rs = np.asarray(rs, dtype=float)
    n = len(rs)
    avg = rs.mean(axis=0)

    def v(members):
        if not members:
            return 0.0
        x = rs[sorted(members)].sum(axis=0)
        if np.linalg.norm(x) < 1e-12 or np.linalg.norm(avg) < 1e-12:
            return 0.0
        return float(x @ avg / (np.linalg.norm(x) * np.linalg.norm(avg)))

    phi = np.zeros(n)
    perms = list(itertools.permutations(range(n)))
    for order in perms:
        seen = []
        for i in order:
            phi[i] += v(seen + [i]) - v(seen)
            seen.append(i)
    return phi / len(perms)


def unit_rows(rng, n, dim):
    rs = rng.standard_normal((n, dim))
    return rs / np.linalg.norm(rs, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# coalition utility


def test_coalition_utility_examples():
    rs = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert coalition_utility([0, 1], rs) == pytest.approx(1.0)
    assert coalition_utility([0], rs) == pytest.approx(R2, abs=1e-8)
    assert coalition_utility([], rs) == 0.0


def test_cancelled_coalition_is_zero():
    rs = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    assert coalition_utility([0, 1], rs) == 0.0


# --------------------------------------------------------------------------
# exact Shapley


def test_two_agent_game():
    phi = exact_shapley([[1, 0], [0, 1]]).phi
    np.testing.assert_allclose(phi, [0.5, 0.5], atol=1e-12)


def test_identical_players_share_equally():
    phi = exact_shapley([[0.6, 0.8]] * 3).phi
    assert phi[0] == pytest.approx(phi[1]) == pytest.approx(phi[2])


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_matches_permutation_oracle(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        rs = unit_rows(rng, n, 7)
        np.testing.assert_allclose(exact_shapley(rs).phi, permutation_shapley(rs), atol=1e-12)


def test_oracle_with_cancellation():
    rs = np.array([[1.0, 0.0], [-1.0, 0.0], [0.6, 0.8], [0.0, 1.0]])
    np.testing.assert_allclose(exact_shapley(rs).phi, permutation_shapley(rs), atol=1e-12)


def test_efficiency_random_n5():
    rs = unit_rows(np.random.default_rng(5), 5, 16)
    assert exact_shapley(rs).phi.sum() == pytest.approx(1.0, abs=1e-9)


def test_enumeration_guard():
    with pytest.raises(TooManyAgentsError):
        exact_shapley(np.eye(17))


# --------------------------------------------------------------------------
# psi


def test_psi_examples():
    assert approx_contribution([[0.6, 0.8]] * 4).psi == pytest.approx([1.0] * 4)
    assert approx_contribution([[1, 0], [0, 1]]).psi == pytest.approx([R2, R2])
    psi = approx_contribution([[1, 0], [1, 0], [0, 1]]).psi
    assert psi == pytest.approx([0.8944, 0.8944, 0.4472], abs=1e-4)


def test_psi_uniform_fallback():
    scores = approx_contribution([[1, 0], [-1, 0]])
    assert scores.uniform_fallback
    assert list(scores.psi) == [0.5, 0.5]


def test_ranking_ties_to_lower_index():
    assert approx_contribution([[1, 0], [1, 0], [0, 1]]).ranking() == [0, 1, 2]


# --------------------------------------------------------------------------
# bound certificate


def test_certificate_identical_vectors():
    cert = bound_certificate([[0.0, 1.0]] * 3)
    assert cert.I_const == pytest.approx(1.0)
    assert cert.holds


def test_certificate_orthogonal_pair():
    cert = bound_certificate([[1, 0], [0, 1]])
    assert cert.I_const == pytest.approx(2.0)  # <r_n, r_avg> = 0.5
    assert cert.holds


def test_certificate_L_matches_hand_enumeration():
    rs = np.array([[1.0, 0.0], [0.0, 1.0]])
    # L_0 = 1/2 * |r0|/|r0| + 1/2 * |r0|/|r0 + r1| = 0.5 + 0.5/sqrt(2)
    cert = bound_certificate(rs)
    assert cert.L == pytest.approx([0.5 + 0.5 * R2] * 2)


def test_certificate_random_instances():
    rng = np.random.default_rng(200)
    for _ in range(200):
        rs = unit_rows(rng, int(rng.integers(3, 9)), 32)
        cert = bound_certificate(rs)
        assert cert.holds
        np.testing.assert_allclose(cert.residuals, cert.phi - cert.L * cert.psi)


def test_alignment_violation():
    rs = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])  # r_avg = (0, 1/3); r0 orthogonal to it
    with pytest.raises(AlignmentViolationError):
        bound_certificate(rs)


def test_unequal_norms_rejected():
    with pytest.raises(ValueError):
        bound_certificate([[1, 0], [0, 2]])


def test_known_low_dimensional_counterexample():
    """In the plane the residual bound can fail; the certificate reports it."""
    rng = np.random.default_rng(0)
    failing = None
    for _ in range(2000):
        rs = unit_rows(rng, int(rng.integers(3, 9)), 2)
        try:
            cert = bound_certificate(rs)
        except AlignmentViolationError:
            continue
        if not cert.holds:
            failing = rs
            break
    assert failing is not None
    cert = bound_certificate(failing)
    assert not cert.ok.all()
    # the residual is still bounded by L_n, the bound that does hold
    assert np.all(np.abs(cert.residuals) <= cert.L + 1e-9)
    with pytest.raises(BoundViolationError):
        bound_certificate(failing, strict=True)


# --------------------------------------------------------------------------
# ranking stability


def test_equal_psi_never_stable():
    rs = unit_rows(np.random.default_rng(1), 4, 8)
    cert = bound_certificate(rs)
    assert ranking_stable([0.5, 0.5, 0.1, 0.1], cert, 0, 1) is False


def test_dominant_cluster_flags_and_agrees():
    rs = dominant_cluster_instance(n=4, eps=0.01, seed=1)
    cert = bound_certificate(rs)
    pairs = stable_pairs(cert)
    assert pairs, "constructed instance should clear the separation threshold"
    oracle = permutation_shapley(rs) / cert.L
    for a, b in pairs:
        assert cert.psi[a] - cert.psi[b] > stability_threshold(cert)
        assert oracle[a] > oracle[b]


def test_random_instances_no_counterexamples():
    rng = np.random.default_rng(500)
    for _ in range(500):
        rs = unit_rows(rng, int(rng.integers(3, 9)), 24)
        cert = bound_certificate(rs)
        stable_pairs(cert)  # raises on a counterexample


# --------------------------------------------------------------------------
# properties

unit_sets = st.integers(2, 6).flatmap(
    lambda n: st.lists(st.lists(st.floats(-1, 1, allow_nan=False), min_size=4, max_size=4), min_size=n, max_size=n)
)


@settings(max_examples=60, deadline=None)
@given(unit_sets, st.randoms(use_true_random=False))
def test_permutation_equivariance(rows, rnd):
    rs = np.asarray(rows, dtype=float)
    if np.any(np.linalg.norm(rs, axis=1) < 1e-3):
        return
    rs /= np.linalg.norm(rs, axis=1, keepdims=True)
    perm = list(range(len(rs)))
    rnd.shuffle(perm)
    phi, phi_p = exact_shapley(rs).phi, exact_shapley(rs[perm]).phi
    np.testing.assert_allclose(phi[perm], phi_p, atol=1e-10)
    np.testing.assert_allclose(approx_contribution(rs).psi[perm], approx_contribution(rs[perm]).psi, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(unit_sets)
def test_efficiency_property(rows):
    rs = np.asarray(rows, dtype=float)
    if np.any(np.linalg.norm(rs, axis=1) < 1e-3):
        return
    rs /= np.linalg.norm(rs, axis=1, keepdims=True)
    total = coalition_utility(range(len(rs)), rs)
    assert exact_shapley(rs).phi.sum() == pytest.approx(total, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(unit_sets, st.floats(0.1, 10))
def test_psi_argmax_scale_invariant(rows, scale):
    rs = np.asarray(rows, dtype=float)
    if np.any(np.linalg.norm(rs, axis=1) < 1e-3):
        return
    rs /= np.linalg.norm(rs, axis=1, keepdims=True)
    psi, psi_scaled = approx_contribution(rs).psi, approx_contribution(rs * scale).psi
    np.testing.assert_allclose(psi, psi_scaled, atol=1e-12)
    gaps = np.diff(np.sort(psi))
    if gaps.size == 0 or gaps.min() > 1e-9:
        assert int(np.argmax(psi)) == int(np.argmax(psi_scaled))
