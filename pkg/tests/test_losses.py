import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segcl.autograd import Tensor
from segcl.encoder import EmbeddingSet
from segcl.losses import LossConfig, dist2, total_loss, triplet_loss, upper_bound_loss


def emb_set(H, Hs, He_rows, negs):
    t = lambda x: Tensor(np.asarray(x, float))  # noqa: E731
    return EmbeddingSet(t(H), [t(n) for n in negs], t(Hs), t(He_rows[:1]), t(He_rows))


def test_dist2_examples():
    assert dist2([0, 0], [3, 4]) == 25.0
    assert dist2([1.5, -2], [1.5, -2]) == 0.0
    with pytest.raises(ValueError):
        dist2([1, 2], [1, 2, 3])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), st.integers(0, 2**31 - 1))
def test_dist2_symmetric(a, seed):
    b = np.random.default_rng(seed).normal(size=len(a))
    assert dist2(a, b) == dist2(b, a)


def test_dist2_gradient():
    a, b = Tensor(np.array([[1.0, -2.0, 0.5]]), True), np.array([[0.0, 1.0, 2.0]])
    triplet_loss(a, b, [np.full((1, 3), 100.0)], eta=1e9).backward()
    # with the hinge active, d/da of d2(a, b) - d2(a, n) = 2(a - b) - 2(a - n)
    np.testing.assert_allclose(a.grad, 2 * (a.data - b) - 2 * (a.data - 100.0))


def test_triplet_examples():
    assert triplet_loss([0, 0], [0, 0], [[3, 4]], 0.5).item() == 0.0
    assert triplet_loss([0, 0], [3, 4], [[0, 0]], 0.0).item() == 25.0
    assert triplet_loss([1, 1], [2, 5], [[2, 5]], 0.0).item() == 0.0


def test_triplet_needs_negatives():
    with pytest.raises(ValueError, match="k=0"):
        triplet_loss([0, 0], [0, 0], [], 0.5)


def test_upper_bound_example():
    # d2+ = 0, d2- = 25, eta = theta = 0.9 -> t = -23.2
    hinge = upper_bound_loss([0, 0], [0, 0], [[3, 4]], 0.9, 0.9, "hinge").item()
    literal = upper_bound_loss([0, 0], [0, 0], [[3, 4]], 0.9, 0.9, "paper-literal").item()
    assert hinge == pytest.approx(23.2, abs=1e-12)
    assert literal == pytest.approx(-23.2, abs=1e-12)


def test_upper_bound_clamped_when_inside_cap():
    for mode in ("hinge", "paper-literal"):
        assert upper_bound_loss([0, 0], [1, 0], [[1.5, 0]], 0.9, 0.9, mode).item() == 0.0
    assert upper_bound_loss([0, 0], [0, 0], [[300, 400]], 0.9, 1e12, "hinge").item() == 0.0


def test_total_zero_weights():
    s = emb_set([[0, 0]], [[3, 4]], [[3, 4]], [[0, 0]])
    cfg = LossConfig(w_e=0, w_s=0)
    _, rep = total_loss(s, cfg)
    assert rep.zeta_total == 0.0


def test_total_composes_scalar_cases():
    # structure positive gives 25, event positive gives 0 (H+ = H = [0,0] vs H- = [3,4])
    s = emb_set([[0, 0]], [[3, 4]], [[0, 0]], [[0, 0]])
    cfg = LossConfig(eta=0.0, theta=0.9)
    _, rep = total_loss(s, cfg)
    assert rep.zeta_s == 25.0 and rep.zeta_e == 0.0
    assert rep.zeta_total == rep.zeta_s + rep.zeta_e + rep.zeta_u


@pytest.mark.parametrize("what, field", [("structure", "zeta_s"), ("event", "zeta_e"),
                                         ("upper_bound", "zeta_u")])
def test_ablation_zeroes_term(what, field):
    rng = np.random.default_rng(0)
    H = rng.normal(size=(4, 3))
    s = emb_set(H, rng.normal(size=(4, 3)) * 5, np.repeat(rng.normal(size=(1, 3)), 4, 0),
                [H[[1, 2, 3, 0]] * 4])
    _, rep = total_loss(s, LossConfig().ablate(what))
    assert getattr(rep, field) == 0.0


def test_unknown_ablation():
    with pytest.raises(ValueError):
        LossConfig().ablate("everything")


def _random_set(rng, n, d, scale):
    H = rng.normal(size=(n, d)) * scale
    return emb_set(H, rng.normal(size=(n, d)) * scale, np.repeat(rng.normal(size=(1, d)), n, 0),
                   [H[np.roll(np.arange(n), s)] for s in range(1, 3)])


@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.floats(0.01, 10),
       st.floats(0, 2), st.floats(0, 2), st.floats(0, 5), st.floats(0, 5))
@settings(max_examples=200, deadline=None)
def test_hinge_total_non_negative(seed, n, scale, eta, theta, we, ws):
    s = _random_set(np.random.default_rng(seed), n, 3, scale)
    _, rep = total_loss(s, LossConfig(eta=eta, theta=theta, w_e=we, w_s=ws, k_negatives=2))
    assert rep.zeta_s >= 0 and rep.zeta_e >= 0 and rep.zeta_u >= 0 and rep.zeta_total >= 0


@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_composition_identity(seed, n, we, ws):
    s = _random_set(np.random.default_rng(seed), n, 4, 1.0)
    for mode in ("hinge", "paper-literal"):
        _, rep = total_loss(s, LossConfig(w_e=we, w_s=ws, upper_bound_sign=mode))
        assert abs(rep.zeta_total - (we * rep.zeta_e + ws * rep.zeta_s + rep.zeta_u)) <= 1e-12


def margin_case(rng, n, d, eta, theta):
    """Anchors, positives and negatives placed so every pair sits inside the two-sided margin."""
    H = rng.normal(size=(n, d))
    u = rng.normal(size=(n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r_pos = rng.uniform(0, 1, n)
    pos = H + u * r_pos[:, None]
    # negative at squared distance d2+ + eta + f * theta, f in [0, 1]
    v = rng.normal(size=(n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = rng.uniform(0, 1, n)
    neg = H + v * np.sqrt(r_pos**2 + eta + f * theta)[:, None]
    return H, pos, neg


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.floats(0.05, 2), st.floats(0.05, 2))
@settings(max_examples=100, deadline=None)
def test_margin_condition_gives_zero(seed, n, eta, theta):
    rng = np.random.default_rng(seed)
    H, pos, neg = margin_case(rng, n, 3, eta, theta)
    # same distances for both positives: reuse pos as the per-row event positive
    s = emb_set(H, pos, pos, [neg])
    # shrink the margin infinitesimally inward to keep rounding from crossing the boundary
    _, rep = total_loss(s, LossConfig(eta=eta * (1 - 1e-9), theta=theta * (1 + 1e-9)))
    assert rep.zeta_total == 0.0


@given(st.integers(0, 2**31 - 1), st.integers(2, 7))
@settings(max_examples=50, deadline=None)
def test_row_permutation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    H, Hs, N = (rng.normal(size=(n, 3)) for _ in range(3))
    He = np.repeat(rng.normal(size=(1, 3)), n, 0)
    perm = rng.permutation(n)
    _, a = total_loss(emb_set(H, Hs, He, [N]), LossConfig())
    _, b = total_loss(emb_set(H[perm], Hs[perm], He[perm], [N[perm]]), LossConfig())
    assert a.zeta_total == pytest.approx(b.zeta_total, rel=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(eta=-0.1)
    with pytest.raises(ValueError):
        LossConfig(k_negatives=0)
    with pytest.raises(ValueError):
        LossConfig(upper_bound_sign="signed")
