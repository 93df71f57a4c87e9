import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcinverse.errors import GridMismatch
from mcinverse.forward import LippmannSchwinger, TorusKernel, mu_from_psi, scattering_amplitude
from mcinverse.numerics import CircleFunction, CircleGrid
from mcinverse.potentials import evaluate, make_test_potential
from mcinverse.recover_h import algo2_h
from mcinverse.rhp import (assemble_b, born_reconstruct, default_points, mu_tilde_minus,
                           mupapp_residual, reconstruct, solve_mu_tilde_plus,
                           solve_mu_tilde_plus_background, v_appr_point, v_appr_point_fd)


@pytest.fixture(scope="module")
def hdata():
    e = 100.0
    v = make_test_potential("hermitian_random_smooth", n=2, size=32, seed=7)
    f = scattering_amplitude(v, e, 32)
    return v, e, f, algo2_h(f, 1), algo2_h(f, -1)


def test_zero_data_back_end():
    zero = TorusKernel(np.zeros((16, 16, 2, 2)), 50.0)
    ws = assemble_b(zero, zero, 0.3 - 0.1j, 50.0)
    assert not np.any(ws.b_matrix())
    mp = solve_mu_tilde_plus(ws)
    eye = np.broadcast_to(np.eye(2), (16, 2, 2))
    assert np.abs(mp.values - eye).max() <= 1e-12
    assert np.abs(mu_tilde_minus(mp, zero, 0.3 - 0.1j, 50.0).values - eye).max() <= 1e-12
    assert np.abs(v_appr_point(zero, zero, 0.3 - 0.1j, 50.0)).max() <= 1e-12


def test_minus_equals_plus_without_h_minus(hdata):
    _, e, _, hp, _ = hdata
    zero = TorusKernel(np.zeros_like(hp.values), e)
    ws = assemble_b(hp, zero, 0.2, e)
    mp = solve_mu_tilde_plus(ws, "direct")
    assert np.array_equal(mu_tilde_minus(mp, zero, 0.2, e).values, mp.values)


def _interp_coeffs(values):
    """Coefficients c_k, k in [-N/2, N/2), of the interpolant sum c_k zeta^k."""
    nn = values.shape[0]
    c = np.fft.fft(values, axis=0) / nn
    return np.fft.fftfreq(nn, 1.0 / nn).astype(int), c


def _contour_cauchy_inside(values, eps=1e-6, m=4096):
    """C_+ g at lambda_i (1 - eps) by singularity-subtracted contour quadrature."""
    nn = values.shape[0]
    ks, c = _interp_coeffs(values)
    zeta = np.exp(2j * np.pi * (np.arange(m) + 0.5) / m)
    g = np.einsum("jk,kab->jab", zeta[:, None] ** ks, c)
    lam = np.exp(2j * np.pi * np.arange(nn) / nn)
    lam_in = lam * (1 - eps)
    g_in = np.einsum("ik,kab->iab", lam_in[:, None] ** ks, c)
    dz = 2j * np.pi / m * zeta
    kern = dz[None, :] / (zeta[None, :] - lam_in[:, None])
    integral = np.einsum("ij,ijab->iab", kern, g[None] - g_in[:, None])
    return integral / (2j * np.pi) + g_in


def _contour_cauchy_outside(values, eps=1e-6, m=4096):
    nn = values.shape[0]
    ks, c = _interp_coeffs(values)
    zeta = np.exp(2j * np.pi * (np.arange(m) + 0.5) / m)
    g = np.einsum("jk,kab->jab", zeta[:, None] ** ks, c)
    lam_out = np.exp(2j * np.pi * np.arange(nn) / nn) * (1 + eps)
    g_out = np.einsum("ik,kab->iab", lam_out[:, None] ** ks, c)
    dz = 2j * np.pi / m * zeta
    kern = dz[None, :] / (zeta[None, :] - lam_out[:, None])
    return np.einsum("ij,ijab->iab", kern, g[None] - g_out[:, None]) / (2j * np.pi)


def test_b_against_contour_limits(hdata):
    v, e, f, _, _ = hdata
    hp, hm = algo2_h(f, 1), algo2_h(f, -1)
    ws = assemble_b(hp, hm, 0.25 + 0.1j, e)
    rng = np.random.default_rng(3)
    nn, n = ws.size, ws.channels
    u = rng.normal(size=(nn, n, n)) + 1j * rng.normal(size=(nn, n, n))
    row = u.transpose(1, 0, 2).reshape(n, nn * n)
    bu = (row @ ws.b_matrix()).reshape(n, nn, n).transpose(1, 0, 2)
    gm = np.einsum("jab,ijbc->iac", u, ws.q_minus)
    gp = np.einsum("jab,ijbc->iac", u, ws.q_plus)
    ref = _contour_cauchy_inside(gm) - _contour_cauchy_outside(gp)
    assert np.abs(bu - ref).max() < 1e-3 * max(1.0, np.abs(ref).max())


def test_neumann_matches_direct():
    e = 400.0
    v = make_test_potential("smooth_compact", n=1, amplitude=0.5, size=32)
    f = scattering_amplitude(v, e, 32)
    ws = assemble_b(algo2_h(f, 1), algo2_h(f, -1), 0.1j, e)
    assert ws.b_norm() <= 0.3
    a = solve_mu_tilde_plus(ws, "direct")
    b = solve_mu_tilde_plus(ws, "neumann")
    assert np.abs(a.values - b.values).max() < 1e-9


def test_mupapp_residual(hdata):
    _, e, _, hp, hm = hdata
    for z in (0.0, 0.4 - 0.3j):
        ws = assemble_b(hp, hm, z, e)
        assert mupapp_residual(ws, solve_mu_tilde_plus(ws)) <= 1e-9


@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8))
def test_dz_analytic_vs_fd(hdata_cached, x, y):
    hp, hm, e = hdata_cached
    z = complex(x, y)
    a = v_appr_point(hp, hm, z, e)
    b = v_appr_point_fd(hp, hm, z, e, step=1e-4)
    assert np.abs(a - b).max() <= 1e-5 * max(np.abs(b).max(), 1e-3)


@pytest.fixture(scope="module")
def hdata_cached(hdata):
    _, e, _, hp, hm = hdata
    return hp, hm, e


def test_mu_tilde_approaches_forward_mu():
    """||mu+ - mu~+||_{L^2(T)} at a fixed z decays at least like E^{-1} for m = 3."""
    v = make_test_potential("polynomial_bump", n=1, size=64, smoothness=3)
    iz = (37, 29)
    x1, x2 = v.coords()
    z = complex(x1[iz], x2[iz])
    energies = (50.0, 100.0, 200.0, 400.0)
    errs = []
    for e in energies:
        nn = 64 if e <= 100 else 128
        solver = LippmannSchwinger(v, e)
        f = scattering_amplitude(v, e, nn, solver)
        hp, hm = algo2_h(f, 1), algo2_h(f, -1)
        mt = solve_mu_tilde_plus(assemble_b(hp, hm, z, e), "direct")
        ang = CircleGrid(nn).angles
        mus = np.array([mu_from_psi(v, solver.solve(a), a, e)[iz] for a in ang])
        errs.append(np.sqrt(np.sum(np.abs(mt.values - mus) ** 2) * 2 * np.pi / nn))
        if e == 100.0:
            # exact mu+ with exact h- reproduces the forward mu-
            mum = np.array([mu_from_psi(v, solver.solve(a, "pm", -1), a, e)[iz] for a in ang])
            mm = mu_tilde_minus(CircleFunction(CircleGrid(nn), mus), hm, z, e)
            assert np.abs(mm.values - mum).max() < 1e-4
    slope = np.polyfit(np.log(energies), np.log(errs), 1)[0]
    assert slope <= -1.5 + 0.5


def test_background_zero_collapses(hdata):
    _, e, _, hp, hm = hdata
    zero = TorusKernel(np.zeros_like(hp.values), e)
    z = 0.1 + 0.2j
    ws = assemble_b(hp, hm, z, e)
    ws1 = assemble_b(zero, zero, z, e)
    eye = CircleFunction(ws.grid, np.broadcast_to(np.eye(2), (ws.size, 2, 2)))
    a = solve_mu_tilde_plus_background(ws, ws1, eye)
    b = solve_mu_tilde_plus(ws, "direct")
    assert np.abs(a.values - b.values).max() <= 1e-10


def test_background_equal_data(hdata):
    _, e, _, hp, hm = hdata
    ws = assemble_b(hp, hm, -0.3j, e)
    rng = np.random.default_rng(5)
    mu1 = CircleFunction(ws.grid, rng.normal(size=(ws.size, 2, 2)) + 0j)
    out = solve_mu_tilde_plus_background(ws, assemble_b(hp, hm, -0.3j, e), mu1)
    assert np.abs(out.values - mu1.values).max() <= 1e-12


def test_grid_mismatch():
    a = TorusKernel(np.zeros((8, 8, 1, 1)), 10.0)
    b = TorusKernel(np.zeros((16, 16, 1, 1)), 10.0)
    with pytest.raises(GridMismatch):
        assemble_b(a, b, 0.0, 10.0)


def test_born_zero_and_linear(hdata):
    _, e, f, _, _ = hdata
    pts = np.array([0.0, 0.3 - 0.2j])
    zero = TorusKernel(np.zeros_like(f.values), e)
    assert not np.any(born_reconstruct(zero, e, pts).values)
    c = 0.7 - 1.3j
    a = born_reconstruct(TorusKernel(c * f.values, e), e, pts).values
    assert np.abs(a - c * born_reconstruct(f, e, pts).values).max() < 1e-13


def test_born_small_amplitude():
    e = 200.0
    pts = np.array([0.0, 0.3 + 0.2j, -0.5j, 0.6])
    amps = np.array([0.05, 0.1, 0.2, 0.4])
    to_truth, to_rhp = [], []
    for a in amps:
        v = make_test_potential("smooth_compact", n=1, amplitude=a, size=64)
        f = scattering_amplitude(v, e, 64)
        b = born_reconstruct(f, e, pts).values
        r = reconstruct(algo2_h(f, 1), algo2_h(f, -1), e, pts).values
        to_truth.append(np.abs(b - evaluate(v, pts.real, pts.imag)).max())
        to_rhp.append(np.abs(b - r).max())
    # the linearisation error against the full back end is quadratic in a
    assert abs(np.polyfit(np.log(amps), np.log(to_rhp), 1)[0] - 2) < 0.1
    # against V: a * (high-energy error) + O(a^2), with a positive quadratic part
    c2, c1 = np.polyfit(amps, np.array(to_truth) / amps, 1)
    assert c2 > 0 and c1 > 0


def test_default_points():
    v = make_test_potential("smooth_compact", n=1, size=32, radius=0.8)
    pts, mask = default_points(v, 0.25)
    assert np.all(np.abs(pts) <= 1.05)
    assert len(pts) == mask.sum()
