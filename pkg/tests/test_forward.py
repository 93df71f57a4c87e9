import numpy as np
import pytest
from scipy import integrate, special

from mcinverse.errors import DomainError, NoConvergence
from mcinverse.forward import (LippmannSchwinger, WaveParams, green_g_plus, green_g_pm,
                               h_pm_direct, psi1_two_wave, scattering_amplitude,
                               solve_lippmann_schwinger)
from mcinverse.numerics import CircleGrid
from mcinverse.potentials import make_test_potential


def test_green_plus_value():
    k = np.array([2.0, 0.0])
    g = green_g_plus(np.array([0.3, 0.4]), k)
    assert abs(g - (-0.25j) * (0.76519768655796655 + 0.08825696421567696j)) < 1e-15


def test_green_plus_symmetry_and_decay():
    k = np.array([3.0, 4.0])
    x = np.array([0.7, -0.2])
    assert green_g_plus(x, k) == green_g_plus(-x, k)
    r = np.array([[200.0, 0.0], [800.0, 0.0]])
    g = np.abs(green_g_plus(r, k))
    assert abs(g[0] / g[1] - 2.0) < 1e-3
    with pytest.raises(DomainError):
        green_g_plus(np.zeros(2), k)


def test_green_pm_at_origin():
    k = np.array([0.0, 5.0])
    assert abs(green_g_pm(np.zeros(2), k, 1) - 0.25j) < 1e-14
    assert abs(green_g_pm(np.zeros(2), k, -1) - 0.25j) < 1e-14


def test_green_pm_sign_flip():
    k = np.array([3.0, 1.0])
    x = np.array([[0.4, -0.9], [1.3, 0.2]])
    assert np.abs(green_g_pm(x, -k, 1) - green_g_pm(x, k, -1)).max() < 1e-13


def test_green_pm_arc_convergence():
    k = np.array([6.0, 8.0])
    x = np.array([1.1, -0.7])
    for s in (1, -1):
        assert abs(green_g_pm(x, k, s, 512) - green_g_pm(x, k, s, 1024)) < 1e-8


def test_zero_potential_solutions():
    v = make_test_potential("smooth_compact", n=2, amplitude=0.0, size=32)
    mu = solve_lippmann_schwinger(v, WaveParams(50.0, 0.3))
    assert np.array_equal(mu.values, np.broadcast_to(np.eye(2), mu.values.shape).astype(complex)) or \
        np.abs(mu.values - np.eye(2)).max() < 1e-15
    f = scattering_amplitude(v, 50.0, 8)
    assert not np.any(f.values)
    assert not np.any(h_pm_direct(v, 50.0, 1, 8).values)


@pytest.mark.parametrize("green,sign", [("plus", 1), ("pm", 1), ("pm", -1)])
def test_solve_residual(green, sign):
    v = make_test_potential("hermitian_random_smooth", n=2, size=32, seed=2)
    solver = LippmannSchwinger(v, 60.0)
    psi = solver.solve(0.7, green, sign)
    assert solver.residual(psi, 0.7, green, sign) <= 1e-8


def test_mu_linear_in_small_potential():
    errs = []
    for a in (0.02, 0.01):
        v = make_test_potential("smooth_compact", n=1, amplitude=a, size=32)
        mu = solve_lippmann_schwinger(v, WaveParams(40.0, 0.0))
        errs.append(np.abs(mu.values - 1).max())
    assert abs(errs[0] / errs[1] - 2) < 0.2


def test_mu_decays_with_energy():
    v = make_test_potential("smooth_compact", n=1, amplitude=1.0, size=64)
    d = [np.abs(solve_lippmann_schwinger(v, WaveParams(e, 0.4)).values - 1).max() for e in (25, 100, 400)]
    assert d[0] > d[1] > d[2]


def _partial_wave_alpha(profile, energy, mmax, r0=1e-5, rmatch=1.0):
    """alpha_m from the radial equation u'' + u'/r + (E - m^2/r^2 - q(r)) u = 0.

    The start u = 1, u' = m / r0 picks the regular solution; its overall
    scale cancels in alpha.
    """
    k = np.sqrt(energy)
    out = []
    for m in range(mmax + 1):
        def rhs(r, y):
            return [y[1], -y[1] / r - (energy - m * m / r**2 - profile(r)) * y[0]]
        sol = integrate.solve_ivp(rhs, (r0, rmatch), [1.0, m / r0], method="DOP853",
                                  rtol=1e-12, atol=1e-30)
        u, du = sol.y[0, -1], sol.y[1, -1]
        kr = k * rmatch
        jm, djm = special.jv(m, kr), special.jvp(m, kr)
        hm, dhm = special.hankel1(m, kr), special.h1vp(m, kr)
        out.append((u * k * djm - du * jm) / (du * hm - u * k * dhm))
    return np.array(out)


def test_amplitude_partial_wave_oracle():
    e = 100.0
    v = make_test_potential("polynomial_bump", n=1, amplitude=1.0, size=64, smoothness=3)
    f = scattering_amplitude(v, e, 16)
    alpha = _partial_wave_alpha(lambda r: np.maximum(1 - r * r, 0.0) ** 3, e, 40)
    ang = CircleGrid(16).angles
    m = np.arange(-40, 41)
    diff = ang[None, :] - ang[:, None]
    ref = (2j / np.pi) / (2 * np.pi) * np.einsum("m,jlm->jl", alpha[np.abs(m)],
                                                 np.exp(1j * m * diff[..., None]))
    assert np.abs(f.values[..., 0, 0] - ref).max() < 1e-6


def test_amplitude_shared_nodes():
    v = make_test_potential("smooth_compact", n=1, size=32)
    solver = LippmannSchwinger(v, 50.0)
    a = scattering_amplitude(v, 50.0, 8, solver)
    b = scattering_amplitude(v, 50.0, 16, solver)
    assert np.abs(a.values - b.values[::2, ::2]).max() < 1e-6


def test_amplitude_grid_self_convergence():
    e = 100.0
    fs = []
    for size in (64, 128):
        v = make_test_potential("smooth_compact", n=1, size=size)
        fs.append(scattering_amplitude(v, e, 8).values)
    assert np.abs(fs[0] - fs[1]).max() < 1e-4


def test_amplitude_born_regime():
    e = 80.0
    ang = CircleGrid(8).angles
    errs = []
    amps = (0.05, 0.1, 0.2)
    for a in amps:
        v = make_test_potential("smooth_compact", n=1, amplitude=a, size=32)
        f = scattering_amplitude(v, e, 8).values[..., 0, 0]
        x1, x2 = v.coords()
        k = np.sqrt(e)
        q1 = k * (np.cos(ang)[:, None] - np.cos(ang)[None, :])
        q2 = k * (np.sin(ang)[:, None] - np.sin(ang)[None, :])
        born = np.einsum("jlxy,xy->jl", np.exp(1j * (q1[..., None, None] * x1 + q2[..., None, None] * x2)),
                         v.values[..., 0, 0]) * v.step**2 / (2 * np.pi) ** 2
        errs.append(np.sqrt(np.sum(np.abs(f - born) ** 2)))
    slope = np.polyfit(np.log(amps), np.log(errs), 1)[0]
    assert abs(slope - 2) < 0.1


def test_h_pm_zero_and_two_wave():
    v = make_test_potential("smooth_compact", n=1, size=32)
    solver = LippmannSchwinger(v, 50.0)
    k = np.sqrt(50.0) * np.array([np.cos(0.5), np.sin(0.5)])
    a = psi1_two_wave(v, k, k, 1, solver)
    b = solver.solve(0.5, "pm", 1)
    assert np.abs(a - b).max() < 1e-14
    with pytest.raises(DomainError):
        psi1_two_wave(v, k, 1.1 * k, 1, solver)


def test_two_wave_residual():
    v = make_test_potential("smooth_compact", n=1, size=32)
    solver = LippmannSchwinger(v, 50.0)
    k = np.sqrt(50.0) * np.array([1.0, 0.0])
    l = np.sqrt(50.0) * np.array([0.0, 1.0])
    psi = psi1_two_wave(v, k, l, -1, solver)
    assert solver.residual(psi, 0.0, "pm", -1, incident_angle=np.pi / 2) <= 1e-8


def test_no_convergence_is_reported():
    v = make_test_potential("smooth_compact", n=1, amplitude=1000.0, size=32)
    solver = LippmannSchwinger(v, 30.0, maxiter=1, tol=1e-14)
    with pytest.raises(NoConvergence):
        solver.solve(0.0)


def test_wave_params_validation():
    with pytest.raises(DomainError):
        WaveParams(-1.0, 0.0)
    with pytest.raises(DomainError):
        WaveParams(1.0, 0.0, sign=0)
