import numpy as np
import pytest
from hypothesis import given, strategies as st

from slowvoter.rng import Estimate, blocks, estimate_blocks, map_blocks, merge_all, stream


def _draw(rng, size):
    return rng.random(size)


def test_stream_is_keyed_and_reproducible():
    a = stream(5, 1, 2).random(4)
    b = stream(5, 1, 2).random(4)
    c = stream(5, 1, 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_blocks_cover_replicas():
    sizes = [s for _, s in blocks(10000, 4096)]
    assert sizes == [4096, 4096, 1808]
    with pytest.raises(ValueError):
        list(blocks(-1))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50),
       st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50))
def test_merge_matches_pooled_summary(xs, ys):
    merged = Estimate.from_samples(xs).merge(Estimate.from_samples(ys))
    pooled = np.array(xs + ys)
    assert merged.n == pooled.size
    assert merged.mean == pytest.approx(pooled.mean(), abs=1e-9)
    assert merged.m2 == pytest.approx(np.sum((pooled - pooled.mean()) ** 2), rel=1e-7, abs=1e-6)


def test_constant_samples_have_zero_stderr():
    e = merge_all([Estimate.from_samples([0.3] * 7), Estimate.from_samples([0.3] * 5)])
    assert e.mean == 0.3
    assert e.stderr == 0.0
    value, err = e
    assert (value, err) == (0.3, 0.0)


def test_results_do_not_depend_on_worker_count():
    one = estimate_blocks(_draw, 9000, seed=3, keys=(7,), workers=1)
    two = estimate_blocks(_draw, 9000, seed=3, keys=(7,), workers=2)
    assert one == two
    parts = map_blocks(_draw, 9000, 3, (7,), workers=2)
    assert [p.size for p in parts] == [4096, 4096, 808]
