import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from trafficgraph.graph import (AdjacencyMatrix, _area_matrix, build_adjacency, density,
                                read_pgm, render_image, sequence_slots, write_pgm)


frames = st.lists(st.tuples(st.floats(-30, 30), st.floats(-30, 30)), max_size=25).map(
    lambda pts: [(i * 3 + 1, x, y) for i, (x, y) in enumerate(pts)])


@settings(max_examples=100)
@given(frames, st.sampled_from([2.0, 10.0, 25.0]))
def test_matches_oracle(frame, mu):
    m = build_adjacency(frame, mu)
    assert np.array_equal(m.w, oracles.oracle_adjacency(frame, mu))


@settings(max_examples=50)
@given(frames, st.randoms(use_true_random=False))
def test_structural_invariants(frame, rnd):
    m = build_adjacency(frame)
    assert np.array_equal(m.w, m.w.T)
    assert np.all(np.diag(m.w) == 0)
    off = m.w[~np.eye(m.n, dtype=bool)]
    assert np.all((off == 0) | ((off >= math.exp(-10)) & (off <= 1)))
    shuffled = list(frame)
    rnd.shuffle(shuffled)
    again = build_adjacency(shuffled)
    assert np.array_equal(m.w, again.w)
    assert list(m.ids) == sorted(u[0] for u in frame)


def test_boundary():
    assert build_adjacency([(1, 0, 0), (2, 10, 0)]).w[0, 1] == 0.0
    w = build_adjacency([(1, 0, 0), (2, 10 - 1e-9, 0)]).w[0, 1]
    assert w > 0
    assert math.isclose(w, math.exp(-10), rel_tol=1e-8)


def test_coincident_users():
    m = build_adjacency([(1, 2.0, 2.0), (2, 2.0, 2.0)])
    assert m.w[0, 1] == 1.0


def test_duplicate_ids():
    with pytest.raises(ValueError):
        build_adjacency([(1, 0, 0), (1, 1, 1)])


def test_bad_mu():
    with pytest.raises(ValueError):
        build_adjacency([(1, 0, 0)], 0.0)


@pytest.mark.parametrize("frame, expected", [
    ([], 0.0),
    ([(1, 0, 0)], 0.0),
    ([(1, 0, 0), (2, 1, 0)], 1.0),
    ([(1, 0, 0), (2, 1, 0), (3, 50, 0)], 2 / 6),
])
def test_density(frame, expected):
    assert density(build_adjacency(frame)) == expected


def test_slots():
    mats = [AdjacencyMatrix(np.array([5, 9]), np.zeros((2, 2))),
            AdjacencyMatrix(np.array([1, 9, 12]), np.zeros((3, 3))),
            AdjacencyMatrix(np.array([3]), np.zeros((1, 1)))]
    assert sequence_slots(mats) == {5: 0, 9: 1, 1: 2, 12: 3, 3: 4}


@pytest.mark.parametrize("n_in, n_out", [(110, 56), (56, 7), (10, 3), (7, 7)])
def test_area_matrix(n_in, n_out):
    r = _area_matrix(n_in, n_out)
    np.testing.assert_allclose(r.sum(axis=1), 1.0)
    # every input cell contributes total weight n_out / n_in of a full bin
    np.testing.assert_allclose(r.sum(axis=0), n_out / n_in)


def test_area_matrix_integer_factor():
    r = _area_matrix(4, 2)
    np.testing.assert_array_equal(r, [[0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5]])


def test_render_sizes_and_range(rng):
    pts = rng.uniform(0, 15, size=(40, 2))
    m = build_adjacency([(i, x, y) for i, (x, y) in enumerate(pts)])
    img = render_image(m)
    assert img.shape == (56, 56)
    assert img.min() >= 0 and img.max() <= 1
    # mass is preserved up to the area scaling
    np.testing.assert_allclose(img.sum(), m.w.sum() * (56 / 110) ** 2)


def test_render_empty():
    img = render_image(build_adjacency([]))
    assert img.shape == (56, 56) and not img.any()


def test_render_capacity():
    m = build_adjacency([(i, 100.0 * i, 0) for i in range(111)])
    with pytest.raises(ValueError):
        render_image(m)


def test_render_slots_place_rows():
    m = build_adjacency([(4, 0, 0), (8, 1, 0)])
    img = render_image(m, canvas_n=4, out_size=4, slots={8: 0, 4: 3})
    assert img[0, 3] == pytest.approx(math.exp(-1))
    assert img[0, 1] == 0


def test_pgm_round_trip(rng):
    img = rng.uniform(size=(5, 7))
    buf = io.StringIO()
    write_pgm(buf, img)
    assert buf.getvalue().startswith("P2\n7 5\n255\n")
    buf.seek(0)
    back = read_pgm(buf)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_unit_distance_weight():
    assert build_adjacency([(1, 0.0, 0.0), (2, 1.0, 0.0)]).w[0, 1] == math.exp(-1)


def test_density_complete_and_empty(rng):
    close = [(i, *rng.uniform(0, 3, 2)) for i in range(8)]
    far = [(i, 20.0 * i, 0.0) for i in range(8)]
    assert density(build_adjacency(close)) == 1.0
    assert density(build_adjacency(far)) == 0.0


@settings(max_examples=50)
@given(frames)
def test_far_user_changes_nothing(frame):
    m = build_adjacency(frame)
    lone = (10**6, 1000.0, 1000.0)
    bigger = build_adjacency(frame + [lone])
    assert bigger.n == m.n + 1
    assert np.array_equal(bigger.w[:m.n, :m.n], m.w)


@settings(max_examples=50)
@given(frames, st.floats(0.05, 0.95))
def test_density_monotone_under_approach(frame, shrink):
    if len(frame) < 2:
        return
    tid, x, y = frame[0]
    others = np.array([(u[1], u[2]) for u in frame[1:]])
    target = others.mean(axis=0)
    # pull the mover toward a point only if that shortens every distance
    moved = (tid, x + shrink * (target[0] - x), y + shrink * (target[1] - y))
    before = np.hypot(others[:, 0] - x, others[:, 1] - y)
    after = np.hypot(others[:, 0] - moved[1], others[:, 1] - moved[2])
    if not np.all(after < before):
        return
    assert density(build_adjacency([moved] + frame[1:])) >= density(build_adjacency(frame))


def test_render_identity_and_block_mean(rng):
    pts = rng.uniform(0, 6, size=(6, 2))
    m = build_adjacency([(i, x, y) for i, (x, y) in enumerate(pts)])
    assert np.array_equal(render_image(m, 6, 6), m.w)
    ones = AdjacencyMatrix(np.arange(2), np.ones((2, 2)))
    assert render_image(ones, 2, 1)[0, 0] == 1.0


@settings(max_examples=30)
@given(frames, st.randoms(use_true_random=False))
def test_render_permutation_stable(frame, rnd):
    shuffled = list(frame)
    rnd.shuffle(shuffled)
    a = render_image(build_adjacency(frame))
    b = render_image(build_adjacency(shuffled))
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1
