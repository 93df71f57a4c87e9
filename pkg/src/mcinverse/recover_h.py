"""Front ends that turn measured data into h_pm on the torus T x T.

Algorithm 2 works from the scattering amplitude f. Algorithm 1 works from
the Dirichlet-to-Neumann kernel on the unit circle, optionally around a
known piecewise-constant diagonal background (``algo1A_*``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, NearSingular
from .forward import TorusKernel
from .numerics import half_circle_weights

COND_LIMIT = 1e12


def _solve_checked(a, b, what):
    try:
        cond = np.linalg.cond(a)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NearSingular(f"{what}: condition number {cond:.3g}", cond)
    return np.linalg.solve(a, b)


def algo2_h(f: TorusKernel, sign) -> TorusKernel:
    """Solve the row equations for h_pm from f.

    For each fixed lambda_i, with X_j = h(lambda_i, lambda_j)::

        X_l - pi i sum_j W_ij f(lambda_j, lambda_l) X_j = f(lambda_i, lambda_l)

    where W is the half-circle quadrature selecting chi_+(+-i(lambda/lambda'' - lambda''/lambda)).
    Columns of the n x n unknowns decouple, so each row is one (N n)-sized
    dense system with n right-hand sides.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    fv = f.values
    nn, _, n, _ = fv.shape
    w = half_circle_weights(nn, sign)
    # fblk[(l, a), (j, c)] = f_jl[a, c]
    fblk = np.transpose(fv, (1, 2, 0, 3)).reshape(nn * n, nn * n)
    eye = np.eye(nn * n)
    out = np.empty_like(fv)
    for i in range(nn):
        wcol = np.repeat(w[i], n)
        a = eye - np.pi * 1j * fblk * wcol[None, :]
        rhs = fv[i].reshape(nn * n, n)
        out[i] = _solve_checked(a, rhs, f"row {i} of the f -> h system").reshape(nn, n, n)
    return TorusKernel(out, f.energy)


@dataclass
class BoundaryTrace:
    """psi_pm(x, k) on the N_b boundary nodes, shape ``(N_b, n, n)``."""

    values: np.ndarray
    energy: float
    angle: float
    sign: int

    @property
    def size(self):
        return self.values.shape[0]


def boundary_green_matrix(nb, energy, angle, sign, arc_nodes=256):
    """W with sum_l W[i, l] g(xi_l) ~ int_{dD} G_pm(x_i - xi, k) g(xi) dxi on the unit circle.

    The logarithmic singularity of G^+ is split off and integrated with the
    product rule of ``kress_log_weights``; the half-circle plane-wave part is
    smooth and uses Gauss-Legendre nodes.
    """
    from scipy import special

    from .forward import half_arc
    from .numerics import EULER_GAMMA, gauss_legendre_arc, kress_log_weights

    kap = np.sqrt(energy)
    t = 2 * np.pi * np.arange(nb) / nb
    d = t[:, None] - t[None, :]
    r = 2 * np.abs(np.sin(d / 2))
    off = ~np.eye(nb, dtype=bool)
    m1 = special.j0(kap * r) / (4 * np.pi)
    m2 = np.empty((nb, nb), dtype=complex)
    g = -0.25j * special.hankel1(0, kap * r[off])
    m2[off] = g - m1[off] * np.log(4 * np.sin(d[off] / 2) ** 2)
    m2[~off] = -0.25j + (np.log(kap / 2) + EULER_GAMMA) / (2 * np.pi)
    w = kress_log_weights(nb) * m1 + (2 * np.pi / nb) * m2
    theta, gw = gauss_legendre_arc(*half_arc(angle, sign), arc_nodes)
    x = np.stack([np.cos(t), np.sin(t)], axis=1)
    a = np.exp(1j * kap * (x @ np.stack([np.cos(theta), np.sin(theta)])))  # (nb, q)
    corr = (0.25j / np.pi) * (a * gw) @ a.conj().T
    return w + corr * (2 * np.pi / nb)


def _fredholm_matrix(kernel, energy, angle, sign, arc_nodes):
    """A[(i,a),(j,b)] with (A psi)_i = sum_j A_ij psi_j w, A_ij = sum_l W_il K_lj."""
    nb, n = kernel.size, kernel.channels
    wg = boundary_green_matrix(nb, energy, angle, sign, arc_nodes)
    a = np.einsum("il,ljab->iajb", wg, kernel.values) * kernel.weight
    return a.reshape(nb * n, nb * n)


def _plane_wave_trace(nb, n, energy, angle):
    t = 2 * np.pi * np.arange(nb) / nb
    e = np.exp(1j * np.sqrt(energy) * np.cos(t - angle))
    return e[:, None, None] * np.eye(n)


def algo1_boundary_psi(kernel, energy, angle, sign, arc_nodes=256) -> BoundaryTrace:
    """Solve psi_pm = e^{ikx} I + int A_pm(x, y) psi_pm(y) dy on the boundary grid."""
    nb, n = kernel.size, kernel.channels
    a = _fredholm_matrix(kernel, energy, angle, sign, arc_nodes)
    rhs = _plane_wave_trace(nb, n, energy, angle).reshape(nb * n, n)
    sysm = np.eye(nb * n) - a
    psi = _solve_checked(sysm, rhs, "boundary Fredholm system")
    res = np.abs(sysm @ psi - rhs).max()
    if res > 1e-9 * max(1.0, np.abs(rhs).max()):
        raise NearSingular(f"boundary Fredholm residual {res:.2e}", None)
    return BoundaryTrace(psi.reshape(nb, n, n), energy, angle, sign)


def _outgoing_phases(nb, energy, angles):
    t = 2 * np.pi * np.arange(nb) / nb
    return np.exp(-1j * np.sqrt(energy) * np.cos(t[None, :] - angles[:, None]))  # (l, i)


def _double_integral(kernel_values, traces, energy, angles, weight):
    """(2 pi)^-2 sum_ij e^{-i l x_i} K_ij psi_j(k) w^2 for all (k, l) pairs."""
    nb = kernel_values.shape[0]
    el = _outgoing_phases(nb, energy, angles)
    kpsi = np.einsum("ijab,kjbc->kiac", kernel_values, traces)  # (k, i, n, n)
    return np.einsum("li,kiac->klac", el, kpsi) * weight**2 / (2 * np.pi) ** 2


def _stack_traces(traces, nn):
    if len(traces) != nn:
        raise GridMismatch(f"need {nn} traces, one per torus angle, got {len(traces)}")
    return np.stack([t.values for t in traces])


def algo1_h(kernel, traces, torus_size, energy) -> TorusKernel:
    """h_pm(k, l) = (2 pi)^-2 int int e^{-ilx} (Phi - Phi_0)(x, y) psi_pm(y, k) dy dx."""
    from .numerics import CircleGrid

    angles = CircleGrid(torus_size).angles
    psi = _stack_traces(traces, torus_size)
    vals = _double_integral(kernel.values, psi, energy, angles, kernel.weight)
    return TorusKernel(vals, energy)


def algo1_pipeline(kernel, torus_size, sign, arc_nodes=256):
    """Traces at every torus angle followed by ``algo1_h``."""
    from .numerics import CircleGrid

    e = kernel.energy
    traces = [algo1_boundary_psi(kernel, e, a, sign, arc_nodes) for a in CircleGrid(torus_size).angles]
    return algo1_h(kernel, traces, torus_size, e), traces


def algo1A_boundary_psi(phi, phi1, phi0, angle, sign, arc_nodes=256):
    """Background-corrected boundary equation (Id + (Id - A^1)^{-1} dA) psi = psi^1.

    Returns ``(psi, psi1)`` as BoundaryTraces.
    """
    e = phi.energy
    nb, n = phi.size, phi.channels
    a1 = _fredholm_matrix(phi1 - phi0, e, angle, sign, arc_nodes)
    da = _fredholm_matrix(phi1 - phi, e, angle, sign, arc_nodes)
    rhs = _plane_wave_trace(nb, n, e, angle).reshape(nb * n, n)
    inner = np.eye(nb * n) - a1
    psi1 = _solve_checked(inner, rhs, "background boundary system")
    outer = np.eye(nb * n) + _solve_checked(inner, da, "background boundary system")
    psi = _solve_checked(outer, psi1, "background-corrected boundary system")
    return (BoundaryTrace(psi.reshape(nb, n, n), e, angle, sign),
            BoundaryTrace(psi1.reshape(nb, n, n), e, angle, sign))


def algo1A_h(phi, phi1, phi0, traces, background_traces, h1, torus_size) -> TorusKernel:
    """h_pm = h^1_pm + (Phi - Phi_1) psi term + (Phi_1 - Phi_0) (psi - psi^1) term."""
    from .numerics import CircleGrid

    e = phi.energy
    angles = CircleGrid(torus_size).angles
    psi = _stack_traces(traces, torus_size)
    psi1 = _stack_traces(background_traces, torus_size)
    t1 = _double_integral((phi - phi1).values, psi, e, angles, phi.weight)
    t2 = _double_integral((phi1 - phi0).values, psi - psi1, e, angles, phi.weight)
    return TorusKernel(h1.values + t1 + t2, e)
