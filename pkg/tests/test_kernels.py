import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from duetreact import _kernels
from duetreact._kernels import _fallback

try:
    from duetreact._kernels import _ckernels
except ImportError:  # pragma: no cover - extension optional
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
vals = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def brute_nearest(z, book):
    out = []
    for row in z:
        d = [float(np.sum((row - e) ** 2)) for e in book]
        out.append(d.index(min(d)))  # first minimum
    return np.array(out)


@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.just(3)), elements=vals),
       hnp.arrays(np.float64, st.tuples(st.integers(1, 9), st.just(3)), elements=vals))
def test_fallback_nearest_matches_brute_force(z, book):
    assert np.array_equal(_fallback.nearest_codes(z, book), brute_nearest(z, book))


@needs_ext
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 12), st.just(4)), elements=vals),
       hnp.arrays(np.float64, st.tuples(st.integers(1, 9), st.just(4)), elements=vals))
def test_backends_agree_on_nearest(z, book):
    assert np.array_equal(_ckernels.nearest_codes(z, book), _fallback.nearest_codes(z, book))


def test_ties_go_to_lowest_index():
    book = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    assert _kernels.nearest_codes(np.zeros((1, 2)), book)[0] == 0
    assert _kernels.nearest_codes(np.array([[1.0, 0.0]]), book)[0] == 0


@needs_ext
@given(hnp.arrays(np.float64, (4, 5, 3), elements=vals), hnp.arrays(np.float64, (4, 6, 3), elements=vals),
       st.floats(0.01, 4.0))
def test_backends_agree_on_contact_mask(f, l, delta):
    a, b = _ckernels.contact_mask(f, l, delta), _fallback.contact_mask(f, l, delta)
    assert a.dtype == b.dtype == np.uint8 and np.array_equal(a, b)


@needs_ext
@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 15), st.integers(1, 6)), elements=vals))
def test_backends_agree_on_pairwise_distance(x):
    assert _ckernels.mean_pairwise_distance(x) == pytest.approx(_fallback.mean_pairwise_distance(x), rel=1e-12)


def test_pairwise_distance_closed_form():
    x = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]])
    assert _kernels.mean_pairwise_distance(x) == pytest.approx(10.0 / 3.0, rel=1e-15)


def test_backend_is_reported():
    assert _kernels.BACKEND in ("cython", "numpy")
