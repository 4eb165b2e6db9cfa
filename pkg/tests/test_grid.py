import numpy as np
import pytest

from kinap.errors import NonphysicalTemperatureError, VacuumError
from kinap.grid import (
    SpatialGrid,
    VelocityGrid,
    conserved,
    gaussian_tail_mass,
    integrate,
    maxwellian,
    maxwellian_from_moments,
    moments,
    primitives,
)

from conftest import double_peak, smooth_profiles_1a


def test_grid_construction():
    g = VelocityGrid(8.4, 32, dim=2)
    assert g.nodes.shape == (33,)
    assert g.dv == pytest.approx(2 * 8.4 / 32)
    assert np.allclose(g.nodes, -g.nodes[::-1])          # symmetric about 0
    assert g.weights[0, 0] == 0.25 and g.weights[1, 1] == 1.0
    assert np.all(g.weights > 0)


def test_grid_reproducible():
    a = VelocityGrid(6.0, 16, dim=2)
    b = VelocityGrid(6.0, 16, dim=2)
    assert np.array_equal(a.nodes, b.nodes)
    assert np.array_equal(a.weights, b.weights)


def test_grid_validation():
    with pytest.raises(ValueError):
        VelocityGrid(6.0, 15, dim=2)   # odd
    with pytest.raises(ValueError):
        VelocityGrid(6.0, 16, dim=3)
    with pytest.raises(ValueError):
        SpatialGrid(10, 1.0, 0.0)
    with pytest.raises(ValueError):
        SpatialGrid(10, 0.0, 1.0, bc="reflecting")


def test_integrate_constant_exact():
    for dim in (1, 2):
        g = VelocityGrid(5.0, 10, dim=dim)
        ones = np.ones(g.shape)
        assert integrate(ones, g) == pytest.approx((2 * 5.0) ** dim, abs=1e-13)


def test_integrate_odd_function_vanishes():
    g = VelocityGrid(7.0, 24, dim=2)
    odd = g.vx * np.exp(-g.speed2 / 3.0)
    scale = integrate(np.abs(odd), g)
    assert abs(integrate(odd, g)) <= 1e-14 * scale


def test_integrate_maxwellian_vs_highres():
    g = VelocityGrid(8.4, 32, dim=2)
    ref = VelocityGrid(8.4, 512, dim=2)
    m = integrate(maxwellian(1.0, np.zeros(2), 1.0, g), g)
    m_ref = integrate(maxwellian(1.0, np.zeros(2), 1.0, ref), ref)
    assert m == pytest.approx(m_ref, abs=1e-8)
    assert m == pytest.approx(1.0, abs=1e-8)


def test_integrate_shape_error():
    g = VelocityGrid(5.0, 8, dim=2)
    with pytest.raises(ValueError):
        integrate(np.ones((4, 4)), g)


def test_moments_of_maxwellian_closed_form():
    g = VelocityGrid(8.4, 32, dim=2)
    U = moments(maxwellian(1.0, np.array([0.2, 0.0]), 0.75, g), g)
    assert np.allclose(U, [1.0, 0.2, 0.0, 0.5 * 0.04 + 0.75], atol=1e-8)


def test_moments_zero_and_double_peak():
    g = VelocityGrid(8.4, 32, dim=2)
    assert np.all(moments(np.zeros(g.shape), g) == 0.0)
    f = double_peak(1.0, np.array([0.2, 0.0]), 0.75, g)
    U = moments(f, g)
    assert abs(U[1]) < 1e-14 and abs(U[2]) < 1e-14   # peaks cancel


def test_primitives_roundtrip_and_errors():
    rho, u, T = primitives(np.array([1.0, 0.2, 0.0, 0.77]), 2)
    assert rho == pytest.approx(1.0)
    assert np.allclose(u, [0.2, 0.0])
    assert T == pytest.approx(0.75)
    _, _, T2 = primitives(np.array([2.0, 0.0, 0.0, 2.0]), 2)
    assert T2 == pytest.approx(1.0)
    with pytest.raises(NonphysicalTemperatureError):
        primitives(np.array([1.0, 1.0, 0.0, 0.5]), 2)
    with pytest.raises(VacuumError):
        primitives(np.array([0.0, 0.0, 0.0, 1.0]), 2)


def test_maxwellian_peak_value():
    g = VelocityGrid(8.4, 32, dim=2)
    M = maxwellian(1.0, np.zeros(2), 1.0, g)
    assert M[16, 16] == pytest.approx(1.0 / (2.0 * np.pi))
    with pytest.raises(ValueError):
        maxwellian(-1.0, np.zeros(2), 1.0, g)
    with pytest.raises(ValueError):
        maxwellian(1.0, np.zeros(2), 0.0, g)


def test_moment_maxwellian_roundtrip_test1a_grid():
    g = VelocityGrid(8.4, 32, dim=2)
    for x in (0.0, 0.15, 0.3, 0.65):
        rho, T = smooth_profiles_1a(x)
        u = np.array([0.2, 0.0])
        U_exact = conserved(rho, u, T, 2)
        U = moments(maxwellian(rho, u, T, g), g)
        assert np.max(np.abs(U - U_exact)) < 1e-8
        # primitives of moments reproduce the inputs
        r2, u2, T2 = primitives(U, 2)
        assert r2 == pytest.approx(rho, abs=1e-9)
        assert T2 == pytest.approx(T, abs=1e-9)


def test_roundtrip_batched():
    g = VelocityGrid(8.4, 32, dim=2)
    rho = np.array([0.5, 1.0, 1.5])
    u = np.array([[0.2, 0.0], [0.0, 0.1], [-0.3, 0.2]])
    T = np.array([0.5, 1.0, 0.8])
    U = moments(maxwellian(rho, u, T, g), g)
    assert np.max(np.abs(U - conserved(rho, u, T, 2))) < 1e-8


def test_tail_mass_matches_quadrature_deficit():
    g = VelocityGrid(8.4, 64, dim=2)
    rho, u, T = 1.0, np.array([0.2, 0.0]), 4.0   # hot enough to spill
    deficit = rho - integrate(maxwellian(rho, u, T, g), g)
    tail = gaussian_tail_mass(rho, u, T, g)
    assert tail > 1e-6                      # the warning regime
    assert deficit == pytest.approx(tail, rel=0.3)


def test_spatial_grid_layout():
    s = SpatialGrid(100, 0.0, 1.0)
    assert s.dx == pytest.approx(0.01)
    assert len(s.centers) == 100 and len(s.interfaces) == 101
    assert s.centers[0] == pytest.approx(0.005)
    # interfaces interleave centers
    assert np.all(s.interfaces[:-1] < s.centers)
    assert np.all(s.centers < s.interfaces[1:])
