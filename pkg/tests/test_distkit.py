import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plugest import distkit
from plugest.distkit import EvalGrid, SignedStepDistribution, from_points, mix


def test_cdf_hand_values():
    d = from_points([-1.0, 2.0], [0.5, 0.5])
    assert d.cdf(0.0) == 0.5
    assert d.cdf(-1.0000001) == 0.0
    # hand sum of weights at locations <= 0
    d2 = from_points([-1.0, 3.0], [0.6, 0.2])
    assert d2.cdf(0.0) == pytest.approx(0.6, abs=0)


def test_cdf_right_continuity_and_left_limit():
    d = from_points([0.0, 1.0], [0.3, 0.7])
    assert d.cdf(1.0) == pytest.approx(1.0)
    assert d.cdf_left(1.0) == pytest.approx(0.3)
    assert d.cdf_left(0.0) == 0.0
    assert d.cdf(0.0) == pytest.approx(0.3)


def test_from_points_merges_duplicates():
    d = from_points([1.0, 1.0, 2.0], [0.25, 0.25, 0.5])
    assert d.n_atoms == 2
    np.testing.assert_allclose(d.locations, [1.0, 2.0])
    np.testing.assert_allclose(d.weights, [0.5, 0.5])


def test_from_points_sorts():
    d = from_points([3.0, -1.0], [0.4, 0.6])
    np.testing.assert_allclose(d.locations, [-1.0, 3.0])
    np.testing.assert_allclose(d.weights, [0.6, 0.4])
    assert d.total_mass == pytest.approx(1.0)


def test_from_points_rejects_bad_input():
    with pytest.raises(ValueError):
        from_points([], [])
    with pytest.raises(ValueError):
        from_points([1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        from_points([np.inf], [1.0])
    with pytest.raises(ValueError):
        from_points([0.0], [np.nan])


def test_first_moment_hand_values():
    assert from_points([-1.0, 1.0], [0.5, 0.5]).first_moment() == pytest.approx(0.0)
    assert from_points([-1.0, 3.0], [0.6, 0.2]).first_moment() == pytest.approx(0.0, abs=1e-12)
    assert from_points([2.0], [1.0]).first_moment() == pytest.approx(2.0)


def test_signed_weights_allowed_and_nonmonotone():
    d = from_points([0.0, 1.0], [1.2, -0.2])
    assert not d.is_monotone()
    assert d.cdf(0.5) == pytest.approx(1.2)
    assert d.cdf(2.0) == pytest.approx(1.0)


def test_total_mass_at_infinity():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=37)
    ws = rng.normal(size=37)
    d = from_points(xs, ws)
    assert d.cdf(np.inf) == pytest.approx(ws.sum(), abs=1e-12)
    assert abs(d.total_mass - ws.sum()) <= 1e-12


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=40))
def test_matches_classical_ecdf(points):
    xs = np.array(points, dtype=float) / 7.0
    n = xs.size
    d = from_points(xs, np.full(n, 1.0 / n))
    grid = np.linspace(-9, 9, 41)
    oracle = (xs[None, :] <= grid[:, None]).mean(axis=1)
    np.testing.assert_allclose(d.cdf(grid), oracle, atol=1e-12)


@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-5, 5)),
                min_size=1, max_size=30),
       st.integers(1, 29))
def test_merge_associativity(pairs, cut):
    xs = np.array([p[0] for p in pairs], dtype=float)
    ws = np.array([p[1] for p in pairs], dtype=float) / 3.0
    cut = min(cut, len(pairs) - 1)
    whole = from_points(xs, ws)
    if cut < 1:
        return
    a = from_points(xs[:cut], ws[:cut])
    b = from_points(xs[cut:], ws[cut:])
    combined = mix([a, b], [1.0, 1.0])
    np.testing.assert_allclose(combined.locations, whole.locations)
    np.testing.assert_allclose(combined.weights, whole.weights, atol=1e-12)


def test_mix_weights_scale():
    a = from_points([0.0], [1.0])
    b = from_points([1.0], [1.0])
    m = mix([a, b], [0.25, 0.75])
    assert m.cdf(0.5) == pytest.approx(0.25)
    assert m.total_mass == pytest.approx(1.0)


def test_monotone_iff_nonnegative_weights():
    rng = np.random.default_rng(3)
    for _ in range(20):
        xs = rng.normal(size=15)
        ws = rng.uniform(0.01, 1, size=15)
        assert from_points(xs, ws).is_monotone()
        ws2 = ws.copy()
        ws2[3] = -0.5
        d = from_points(xs, ws2)
        grid = np.sort(np.concatenate([xs - 1e-9, xs, xs + 1e-9]))
        vals = d.cdf(grid)
        assert np.any(np.diff(vals) < 0)


def test_csv_serialization():
    d = from_points([0.5, 1.5], [0.25, -0.125])
    buf = io.StringIO()
    d.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "location,weight"
    assert lines[1] == "0.5,0.25"
    assert lines[2] == "1.5,-0.125"


def test_immutability():
    d = from_points([0.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        d.locations[0] = 5.0


def test_eval_grid_validation():
    g = EvalGrid(np.array([0.0, 1.0, 2.0]))
    assert g.size == 3
    with pytest.raises(ValueError):
        EvalGrid(np.array([]))
    with pytest.raises(ValueError):
        EvalGrid(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        EvalGrid(np.array([1.0, np.nan]))
    r = EvalGrid.regular(-1, 1, 5)
    np.testing.assert_allclose(r.points, [-1, -0.5, 0, 0.5, 1])


def test_cdf_on_grid():
    d = from_points([0.0, 1.0], [0.5, 0.5])
    g = EvalGrid(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_allclose(d.cdf_on(g), [0.0, 0.5, 1.0])
