import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from mcinverse.errors import DomainError
from mcinverse.potentials import (FrequencyField, MatrixField, SmoothnessSpec, add_fields, evaluate,
                                  fourier_transform, make_test_potential, norm_alpha_s,
                                  reduce_3d_to_2d)


def test_zero_amplitude_gives_zero_field():
    v = make_test_potential("smooth_compact", n=2, amplitude=0.0, size=32)
    assert not np.any(v.values)


def test_diagonal_constant_on_disk():
    v = make_test_potential("diagonal_constant_on_D", n=2, diagonal=[1, 4], size=32)
    x1, x2 = v.coords()
    inside = x1**2 + x2**2 <= 1
    assert np.all(v.values[inside] == np.diag([1.0, 4.0]))
    assert not np.any(v.values[~inside])


def test_smooth_compact_support():
    v = make_test_potential("smooth_compact", n=1, radius=0.8, size=64)
    x1, x2 = v.coords()
    assert not np.any(v.values[x1**2 + x2**2 >= 0.64])
    assert v.support_radius == 0.8


def test_invalid_params():
    with pytest.raises(DomainError):
        make_test_potential("smooth_compact", radius=2.0)
    with pytest.raises(DomainError):
        make_test_potential("smooth_compact", amplitude=float("nan"))
    with pytest.raises(DomainError):
        make_test_potential("no_such_kind")


def test_hermitian_fixture_is_hermitian_and_noncommuting():
    v = make_test_potential("hermitian_random_smooth", n=2, size=32, seed=3)
    vals = v.values
    assert np.abs(vals - np.conj(np.swapaxes(vals, -1, -2))).max() < 1e-15
    a, b = vals[16, 16], vals[14, 19]
    assert np.abs(a @ b - b @ a).max() > 1e-3


@pytest.mark.parametrize("kind", ["smooth_compact", "polynomial_bump", "hermitian_random_smooth",
                                  "gaussian_bump"])
def test_evaluate_matches_grid(kind):
    v = make_test_potential(kind, n=2, size=32)
    x1, x2 = v.coords()
    assert np.abs(evaluate(v, x1, x2) - v.values).max() < 1e-13


def test_evaluate_interpolates_plain_fields():
    v = make_test_potential("gaussian_bump", n=1, width=0.3, size=64)
    plain = v.with_values(v.values.copy())
    x = np.array([0.123, -0.4])
    y = np.array([0.05, 0.31])
    ref = np.exp(-(x**2 + y**2) / 0.09)
    assert np.abs(evaluate(plain, x, y)[:, 0, 0] - ref).max() < 1e-10


def test_add_fields():
    a = make_test_potential("diagonal_constant_on_D", n=1, diagonal=[2.0], size=32)
    b = make_test_potential("smooth_compact", n=1, radius=0.6, size=32)
    s = add_fields(a, b)
    assert np.array_equal(s.values, a.values + b.values)
    assert abs(evaluate(s, np.array([0.0]), np.array([0.0]))[0, 0, 0] - 3.0) < 1e-14


def test_gaussian_transform_closed_form():
    a, w = 1.3, 0.3
    v = make_test_potential("gaussian_bump", n=1, amplitude=a, width=w, size=256)
    vh = fourier_transform(v)
    p = vh.axis
    ref = a / (2 * np.pi) ** 2 * np.pi * w**2 * np.exp(-(w**2) * (p[:, None] ** 2 + p[None, :] ** 2) / 4)
    assert np.abs(vh.values[..., 0, 0] - ref).max() < 1e-6


def test_box_transform():
    c, a, half, size = 0.7, 0.5, 1.5, 256
    h = 2 * half / size
    x = -half + h * np.arange(size)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    box = ((np.abs(x1) <= a) & (np.abs(x2) <= a)).astype(float)
    v = MatrixField(c * box[..., None, None] * np.eye(2), half, np.sqrt(2) * a)
    vh = fourier_transform(v)
    p = vh.axis
    def sinc1(q):
        return 2 * a * np.sinc(q * a / np.pi)
    ref = c / (2 * np.pi) ** 2 * sinc1(p)[:, None] * sinc1(p)[None, :]
    low = np.abs(p) < 10
    err = np.abs(vh.values[..., 0, 0] - ref)[np.ix_(low, low)]
    # jump discontinuity: first-order quadrature error
    assert err.max() < 2 * h * c / (2 * np.pi) ** 2 * 4 * a
    assert np.abs(vh.values[..., 0, 1]).max() == 0


def test_transform_reality_symmetry():
    v = make_test_potential("hermitian_random_smooth", n=1, size=64, seed=1)
    vh = fourier_transform(v).values[..., 0, 0]
    m = vh.shape[0]
    idx = (-np.arange(m)) % m  # index of -p on the shifted lattice p = step (k - m/2)
    assert np.abs(vh[np.ix_(idx, idx)] - np.conj(vh)).max() < 1e-15


@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_transform_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    u = MatrixField(rng.normal(size=(16, 16, 2, 2)) + 0j, 1.5, 1.0)
    w = MatrixField(rng.normal(size=(16, 16, 2, 2)) * 1j, 1.5, 1.0)
    lhs = fourier_transform(u.with_values(a * u.values + b * w.values)).values
    rhs = a * fourier_transform(u).values + b * fourier_transform(w).values
    assert np.abs(lhs - rhs).max() < 1e-12


def test_norm_zero_and_profile():
    spec = SmoothnessSpec(m=3, eps=1.0)
    step = 0.25
    p = step * (np.arange(64) - 32)
    assert norm_alpha_s(FrequencyField(np.zeros((64, 64, 2, 2)), step), spec) == 0
    prof = (1 + p[:, None] ** 2 + p[None, :] ** 2) ** (-spec.s / 2)
    val = norm_alpha_s(FrequencyField(prof[..., None, None] * np.eye(2), step), spec)
    assert 1 <= val <= 1 + 2 ** (1 + spec.alpha)


def test_norm_rejects_coarse_lattice():
    with pytest.raises(DomainError):
        norm_alpha_s(FrequencyField(np.ones((8, 8)), 1.5), SmoothnessSpec())


def test_norm_dense_grid_oracle():
    # halving the lattice step changes the estimate little for a smooth profile
    spec = SmoothnessSpec(m=3)
    v = make_test_potential("polynomial_bump", n=1, size=64, smoothness=3)
    a = norm_alpha_s(fourier_transform(v, pad=4), spec)
    b = norm_alpha_s(fourier_transform(v, pad=8), spec)
    assert abs(a - b) / b < 0.05


@given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_norm_is_a_norm(seed, c):
    rng = np.random.default_rng(seed)
    spec = SmoothnessSpec(m=3, eps=0.5)
    shape = (16, 16, 2, 2)
    u = FrequencyField(rng.normal(size=shape) + 1j * rng.normal(size=shape), 0.5)
    w = FrequencyField(rng.normal(size=shape) + 1j * rng.normal(size=shape), 0.5)
    nu, nw = norm_alpha_s(u, spec), norm_alpha_s(w, spec)
    assert abs(norm_alpha_s(FrequencyField(c * u.values, 0.5), spec) - abs(c) * nu) <= 1e-10 * max(nu, 1)
    assert norm_alpha_s(FrequencyField(u.values + w.values, 0.5), spec) <= nu + nw + 1e-10 * (nu + nw)


def _grid(size=16, half=1.5):
    x = -half + 2 * half / size * np.arange(size)
    return np.meshgrid(x, x, indexing="ij")


def test_reduce_zero_potential():
    v = reduce_3d_to_2d(np.zeros((16, 16, 33)), 3, (0.0, 2.0))
    lam = (np.arange(1, 4) * np.pi / 2) ** 2
    assert np.array_equal(v.values, np.broadcast_to(np.diag(lam), v.values.shape).astype(complex))


def test_reduce_z_independent():
    x1, x2 = _grid()
    a = np.exp(-(x1**2 + x2**2))
    v = reduce_3d_to_2d(np.repeat(a[..., None], 65, axis=2), 2, (0.0, np.pi))
    ref = np.zeros(v.values.shape)
    ref[..., 0, 0] = 1 + a
    ref[..., 1, 1] = 4 + a
    assert np.abs(v.values - ref).max() < 1e-8


def test_reduce_sine_moment():
    x1, x2 = _grid()
    a = np.exp(-(x1**2 + x2**2))
    nz = 65
    z = np.linspace(0, np.pi, nz)
    v = reduce_3d_to_2d(a[..., None] * z, 2, (0.0, np.pi))
    m12 = integrate.quad(lambda t: (2 / np.pi) * np.sin(t) * np.sin(2 * t) * t, 0, np.pi, epsabs=1e-15)[0]
    m11 = integrate.quad(lambda t: (2 / np.pi) * np.sin(t) ** 2 * t, 0, np.pi, epsabs=1e-15)[0]
    assert abs(m12 + 16 / (9 * np.pi)) < 1e-14
    assert abs(m11 - np.pi / 2) < 1e-14
    ref = np.zeros(v.values.shape)
    ref[..., 0, 1] = ref[..., 1, 0] = a * m12
    ref[..., 0, 0] = 1 + a * m11
    ref[..., 1, 1] = 4 + a * m11
    assert np.abs(v.values - ref).max() < 1e-6


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_reduce_hermitian_for_real_v(seed, n):
    rng = np.random.default_rng(seed)
    v = reduce_3d_to_2d(rng.normal(size=(8, 8, 33)), n, (-1.0, 1.5))
    assert np.abs(v.values - np.conj(np.swapaxes(v.values, -1, -2))).max() <= 1e-12


def test_reduce_guard():
    with pytest.raises(DomainError):
        reduce_3d_to_2d(np.zeros((8, 8, 16)), 5, (0.0, 1.0))


def test_reduce_domain_cut():
    v = reduce_3d_to_2d(np.ones((16, 16, 33)), 1, (0.0, 1.0), domain_radius=1.0)
    x1, x2 = v.coords()
    assert not np.any(v.values[x1**2 + x2**2 > 1])
