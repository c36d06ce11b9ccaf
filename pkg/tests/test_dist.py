import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochbal.dist import (
    DiscreteDist,
    SupportOverflow,
    convolve,
    convolve_all,
    effective_size,
    effective_sizes,
    mean,
    moment_q,
    tail_bound,
    truncate_split,
)

from oracles import beta_direct


@st.composite
def dists(draw, max_atoms=5, max_value=3.0):
    k = draw(st.integers(1, max_atoms))
    values = draw(st.lists(st.floats(0, max_value, allow_nan=False), min_size=k, max_size=k))
    weights = draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k))
    total = sum(weights)
    return DiscreteDist(values, [w / total for w in weights])


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        DiscreteDist([1.0], [0.5])
    with pytest.raises(ValueError):
        DiscreteDist([-1.0], [1.0])
    with pytest.raises(ValueError):
        DiscreteDist([], [])
    with pytest.raises(ValueError):
        DiscreteDist([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        DiscreteDist([math.inf], [1.0])


def test_merges_and_drops_zero_mass():
    d = DiscreteDist([1.0, 1.0 + 1e-14, 2.0, 3.0], [0.25, 0.25, 0.5, 0.0])
    assert d.atoms == [(1.0, 0.5), (2.0, 0.5)]
    assert d == DiscreteDist([2.0, 1.0], [0.5, 0.5])
    assert hash(d) == hash(DiscreteDist([2.0, 1.0], [0.5, 0.5]))


def test_immutable():
    d = DiscreteDist.point(1.0)
    with pytest.raises(AttributeError):
        d.values = np.zeros(1)
    with pytest.raises(ValueError):
        d.values[0] = 2.0


def test_split_example():
    tr, ex = truncate_split(DiscreteDist([0.5, 3.0], [0.5, 0.5]), 1.0)
    assert mean(tr) == pytest.approx(0.25)
    assert mean(ex) == pytest.approx(1.5)
    assert moment_q(tr, 2) == pytest.approx(0.125)


def test_split_at_threshold_is_truncated():
    tr, ex = truncate_split(DiscreteDist.point(1.0), 1.0)
    assert mean(tr) == 1.0 and mean(ex) == 0.0


@given(dists(), st.floats(0.1, 4.0))
def test_split_parts_add_up(d, thr):
    tr, ex = truncate_split(d, thr)
    assert mean(tr) + mean(ex) == pytest.approx(mean(d), abs=1e-12)
    assert tr.max_value <= thr


def test_effective_size_values():
    b = DiscreteDist.bernoulli(0.5, 1.0)
    assert effective_size(b, 4) == pytest.approx(math.log(2.5, 4), abs=1e-12)
    assert effective_size(b, 1) == 0.5
    assert effective_size(DiscreteDist.point(0.7), 9) == pytest.approx(0.7)


@settings(max_examples=50)
@given(dists(max_value=1.0))
def test_effective_sizes_match_direct_and_monotone(d):
    ks = list(range(1, 20))
    vals = effective_sizes(d, ks)
    for k, v in zip(ks, vals):
        assert v == pytest.approx(beta_direct(d.atoms, k), rel=1e-9, abs=1e-12)
    assert np.all(np.diff(vals) >= -1e-12)
    assert mean(d) - 1e-12 <= vals.min() and vals.max() <= d.max_value + 1e-12


def test_effective_size_large_values_stable():
    d = DiscreteDist([0.0, 500.0], [0.5, 0.5])
    assert math.isfinite(effective_size(d, 1000))
    assert effective_size(d, 1000) == pytest.approx(500 + math.log(0.5, 1000))


def test_convolution():
    b = DiscreteDist.bernoulli(0.5, 1.0)
    s = convolve(b, b)
    assert s.atoms == [(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)]
    assert convolve_all([]) == DiscreteDist.point(0.0)


@given(st.lists(dists(max_atoms=3), min_size=1, max_size=4))
def test_convolution_mean_additive(ds):
    assert mean(convolve_all(ds)) == pytest.approx(sum(mean(d) for d in ds), rel=1e-9, abs=1e-12)


def test_convolution_cap():
    d = DiscreteDist([0.0, 1.0, 2.5], [0.2, 0.3, 0.5])
    with pytest.raises(SupportOverflow):
        convolve(d, d, cap=8)


def test_sampling_matches_pmf():
    d = DiscreteDist([0.0, 1.0, 4.0], [0.2, 0.3, 0.5])
    x = d.sample(np.random.default_rng(1), 200_000)
    for v, p in d.atoms:
        assert np.mean(x == v) == pytest.approx(p, abs=0.005)


def test_tail_bound():
    assert tail_bound(4, 1.0, 3.0) == pytest.approx(1 / 16)
    assert tail_bound(4, 3.0, 1.0) == 1.0
