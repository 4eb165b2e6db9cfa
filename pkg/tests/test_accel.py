"""The numba kernels and their numpy twins compute the same thing."""

import numpy as np
import pytest

from kinap import _accel


@pytest.fixture()
def stencil_data(rng):
    h = rng.standard_normal((3, 17, 17))
    m = np.exp(rng.standard_normal((3, 17, 17)))
    return h, np.sqrt(m)


def test_fp_apply_backends_agree(stencil_data):
    h, sm = stencil_data
    a = _accel.fp_apply_numpy(h, sm, 0.4)
    b = _accel.fp_apply_numba(h, sm, 0.4)
    assert np.max(np.abs(a - b)) < 1e-13 * max(1.0, np.max(np.abs(a)))


def test_fp_apply_2d_shape(stencil_data):
    h, sm = stencil_data
    a = _accel.fp_apply_numpy(h[0], sm[0], 0.4)
    b = _accel.fp_apply_numba(h[0], sm[0], 0.4)
    assert a.shape == (17, 17)
    assert np.max(np.abs(a - b)) < 1e-13 * max(1.0, np.max(np.abs(a)))


def test_minmod_backends_agree(rng):
    a = rng.standard_normal((5, 9, 9))
    b = rng.standard_normal((5, 9, 9))
    ref = _accel.minmod_numpy(a, b)
    out = _accel.minmod_numba(a, b)
    assert np.array_equal(ref, out)


def test_minmod_values():
    a = np.array([1.0, -2.0, 3.0, 0.0])
    b = np.array([2.0, -1.0, -3.0, 5.0])
    out = _accel.minmod_numpy(a, b)
    assert np.array_equal(out, [1.0, -1.0, 0.0, 0.0])


def test_backend_flag_is_reported():
    assert isinstance(_accel.USING_NUMBA, bool)
