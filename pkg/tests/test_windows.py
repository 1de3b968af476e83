"""Window sums and maxima against direct masks over the periodic extension."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pelliptic.windows import STRICT_SLACK, ball_reducer, cone_reducer, lateral_intervals


def brute_window(data, src_x0, tgt_x0, radius, mesh, M, L, reduce):
    """Loop over rows and every periodic lateral offset inside the open ball."""
    out = np.full((M,) * L, np.nan if reduce == "max" else 0.0, dtype=data.dtype if reduce == "sum" else float)
    reach = int(np.ceil(radius / mesh)) + 1
    offsets = list(itertools.product(range(-reach, reach + 1), repeat=L))
    for idx in itertools.product(range(M), repeat=L):
        acc = [] if reduce == "max" else 0.0
        for r, x0 in enumerate(src_x0):
            rem = radius**2 - (x0 - tgt_x0) ** 2
            if rem <= STRICT_SLACK * radius**2:
                continue
            for off in offsets:
                if sum((o * mesh) ** 2 for o in off) < rem * (1 - STRICT_SLACK):
                    v = data[(r,) + tuple((i + o) % M for i, o in zip(idx, off))]
                    if reduce == "max":
                        acc.append(v)
                    else:
                        acc += v
        out[idx] = (max(acc) if acc else 0.0) if reduce == "max" else acc
    return out


@pytest.mark.parametrize("L", [1, 2])
@pytest.mark.parametrize("radius", [0.05, 0.13, 0.3, 0.7])
def test_ball_sum_and_max(L, radius):
    rng = np.random.default_rng(int(radius * 100) + L)
    M, mesh = 8, 0.125
    src = np.arange(6) * 0.1
    data = rng.normal(size=(src.size,) + (M,) * L)
    tgt = np.array([0.2, 0.35])
    red = ball_reducer(tgt, radius, src, mesh, M, L)
    sums, maxs = red.sum(data), red.max(data)
    for t, x in enumerate(tgt):
        np.testing.assert_allclose(sums[t], brute_window(data, src, x, radius, mesh, M, L, "sum"), atol=1e-12)
        np.testing.assert_allclose(maxs[t], brute_window(data, src, x, radius, mesh, M, L, "max"), atol=0)


def test_counts_match_sum_of_ones():
    M, L = 16, 1
    src = np.arange(10) / 16
    red = ball_reducer([0.25, 0.5], [0.2, 0.1], src, 1 / 16, M, L)
    ones = np.ones((src.size, M))
    np.testing.assert_allclose(red.sum(ones)[:, 0], red.counts())


def test_cone_window_matches_mask():
    M, mesh, a = 16, 1 / 16, 1.5
    src = np.arange(1, 9) / 16
    rng = np.random.default_rng(3)
    data = rng.random((src.size, M))
    red = cone_reducer(src, a, np.inf, mesh, M, 1)
    got = red.sum(data)[0]
    for q in range(M):
        total = 0.0
        for r, y0 in enumerate(src):
            for d in range(-M, M + 1):
                if (d * mesh) ** 2 < (a * y0) ** 2 * (1 - STRICT_SLACK):
                    total += data[r, (q + d) % M]
        assert got[q] == pytest.approx(total, abs=1e-12)


def test_truncated_cone_uses_fewer_rows():
    src = np.arange(1, 9) / 8
    full = cone_reducer(src, 1.0, np.inf, 1 / 8, 8, 1)
    cut = cone_reducer(src, 1.0, 0.5, 1 / 8, 8, 1)
    assert set(cut.sources) <= set(full.sources)
    assert max(src[cut.sources]) <= 0.5 + 1e-12


def test_empty_windows():
    red = ball_reducer([0.6], [1e-3], np.arange(3) * 0.25, 0.25, 4, 2)
    assert red.counts()[0] == 0
    assert np.all(red.max(np.ones((3, 4, 4)), fill=-1.0) == -1.0)


@settings(max_examples=50, deadline=None)
@given(r2=st.floats(0.0, 4.0), L=st.integers(1, 3))
def test_intervals_cover_exactly_the_lattice_ball(r2, L):
    mesh = 0.5
    owner, leads, half = lateral_intervals(np.array([r2]), mesh, L)
    got = set()
    for lead, hw in zip(leads, half):
        for k in range(-int(hw), int(hw) + 1):
            got.add(tuple(int(v) for v in lead) + (k,))
    reach = int(np.sqrt(r2) / mesh) + 2
    want = {off for off in itertools.product(range(-reach, reach + 1), repeat=L)
            if sum((o * mesh) ** 2 for o in off) < r2 * (1 - STRICT_SLACK)}
    assert got == want
