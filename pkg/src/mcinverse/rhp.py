"""Riemann-Hilbert back end: h_pm -> mu~+ -> mu~- -> V_appr.

Functions of lambda on T are handled as block rows: ``M = [m_0 | ... | m_{N-1}]``
of shape ``(n, N n)``, and every operator of the form
``(Ku)(lambda) = int u(lambda') K(lambda, lambda') |dlambda'|`` acts by right
multiplication with a block matrix whose block (j, i) is the quadrature-weighted
K(lambda_i, lambda_j).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import GridMismatch, NearSingular
from .forward import TorusKernel
from .numerics import CircleFunction, CircleGrid, half_circle_weights, projector_matrix

COND_LIMIT = 1e12


def lu_checked(a, what):
    """LU factors of a, refusing matrices whose 1-norm condition estimate exceeds COND_LIMIT."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=True)
    anorm = np.abs(a).sum(axis=0).max()
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, _ = gecon(lu, anorm, norm="1")
    if not rcond > 1.0 / COND_LIMIT:
        raise NearSingular(f"{what} is near singular (rcond {rcond:.3g})", 1.0 / rcond if rcond else np.inf)
    return lu, piv


def phase_matrix(nodes, z, energy):
    """exp[-(i/2) E^{1/2} (lambda zbar + z/lambda - lambda' zbar - z/lambda')] on the node grid."""
    a = np.sqrt(energy) * np.real(nodes * np.conj(z))  # (1/2)(lambda zbar + z/lambda)
    return np.exp(-1j * (a[:, None] - a[None, :]))


def phase_dz(nodes, energy):
    """d/dz of the phase exponent: -(i/2) E^{1/2} (1/lambda - 1/lambda')."""
    inv = 1.0 / nodes
    return -0.5j * np.sqrt(energy) * (inv[:, None] - inv[None, :])


def _check_pair(hp, hm):
    if hp.values.shape != hm.values.shape:
        raise GridMismatch("h+ and h- live on different grids")


def _q_blocks(h, sign, phase):
    """q[i, j] = pi i W^sign_ij h(lambda_i, lambda_j, z), shape (N, N, n, n)."""
    nn = h.shape[0]
    w = half_circle_weights(nn, sign)
    return (np.pi * 1j) * (w * phase)[..., None, None] * h


def _to_right_matrix(k):
    """Block matrix R with (M R)_i = sum_j m_j k[i, j], for k of shape (N, N, n, n)."""
    nn, _, n, _ = k.shape
    return np.transpose(k, (1, 2, 0, 3)).reshape(nn * n, nn * n)


def _b_blocks(qm, qp):
    nn = qm.shape[0]
    pp = projector_matrix(nn, "inside")
    pm = projector_matrix(nn, "outside")
    return np.einsum("ik,kjab->ijab", pp, qm) - np.einsum("ik,kjab->ijab", pm, qp)


@dataclass
class RhpWorkspace:
    z: complex
    energy: float
    h_plus: TorusKernel
    h_minus: TorusKernel
    phase: np.ndarray
    q_plus: np.ndarray
    q_minus: np.ndarray
    b_blocks: np.ndarray
    _lu: tuple = field(default=None, repr=False)

    @property
    def size(self):
        return self.phase.shape[0]

    @property
    def channels(self):
        return self.h_plus.channels

    @property
    def grid(self):
        return CircleGrid(self.size)

    def b_matrix(self):
        return _to_right_matrix(self.b_blocks)

    def system(self):
        """I + B as a right-acting block matrix."""
        m = self.b_matrix()
        return np.eye(m.shape[0]) + m

    def factor(self):
        if self._lu is None:
            # M (I + B) = R  <=>  (I + B)^T M^T = R^T
            self._lu = lu_checked(self.system().T, f"I + B at z={self.z}")
        return self._lu

    def solve_right(self, rhs):
        """Solve M (I + B) = rhs for the block row M."""
        return sla.lu_solve(self.factor(), rhs.T).T

    def b_norm(self, iters=60, seed=0):
        """Power-iteration estimate of the L^2(T) operator norm of B."""
        m = self.b_matrix()
        nn, n = self.size, self.channels
        rng = np.random.default_rng(seed)
        x = rng.normal(size=nn * n) + 1j * rng.normal(size=nn * n)
        x /= np.linalg.norm(x)
        est = 0.0
        for _ in range(iters):
            y = x @ m
            y = m.conj() @ y.conj()
            y = y.conj()
            nrm = np.linalg.norm(y)
            if nrm == 0:
                return 0.0
            est = np.sqrt(nrm)
            x = y / nrm
        return float(est)


def assemble_b(h_plus: TorusKernel, h_minus: TorusKernel, z, energy) -> RhpWorkspace:
    _check_pair(h_plus, h_minus)
    nn = h_plus.size
    nodes = CircleGrid(nn).nodes
    ph = phase_matrix(nodes, z, energy)
    qp = _q_blocks(h_plus.values, 1, ph)
    qm = _q_blocks(h_minus.values, -1, ph)
    return RhpWorkspace(complex(z), float(energy), h_plus, h_minus, ph, qp, qm, _b_blocks(qm, qp))


def _identity_row(nn, n):
    return np.tile(np.eye(n, dtype=complex), (1, nn))


def _row_to_circle(m, nn, n):
    return m.reshape(n, nn, n).transpose(1, 0, 2)


def _circle_to_row(values):
    nn, n, _ = values.shape
    return values.transpose(1, 0, 2).reshape(n, nn * n)


def solve_mu_tilde_plus(ws: RhpWorkspace, method="auto", tol=1e-13, maxiter=500):
    """Solve mu + int mu(lambda') B(lambda, lambda') |dlambda'| = I.

    ``method`` is 'direct', 'neumann' or 'auto'; 'auto' uses successive
    approximations when the estimated norm of B is below 1/2.
    """
    nn, n = ws.size, ws.channels
    rhs = _identity_row(nn, n)
    if method == "auto":
        method = "neumann" if ws.b_norm() < 0.5 else "direct"
    if method == "direct":
        m = ws.solve_right(rhs)
    elif method == "neumann":
        bm = ws.b_matrix()
        m = rhs.copy()
        for _ in range(maxiter):
            new = rhs - m @ bm
            if np.abs(new - m).max() <= tol:
                m = new
                break
            m = new
        else:
            raise NearSingular("successive approximations did not contract", None)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CircleFunction(ws.grid, _row_to_circle(m, nn, n))


def mupapp_residual(ws: RhpWorkspace, mu: CircleFunction):
    m = _circle_to_row(mu.values)
    res = m + m @ ws.b_matrix() - _identity_row(ws.size, ws.channels)
    return float(np.abs(res).max())


def _apply_q(mu_values, q):
    """(Q u)(lambda_i) = sum_j u_j q[i, j]."""
    return np.einsum("jab,ijbc->iac", mu_values, q)


def mu_tilde_minus(mu_plus: CircleFunction, h_minus: TorusKernel, z, energy) -> CircleFunction:
    """mu~- = mu~+ + pi i int mu~+(lambda'') chi_+(-i(...)) h_-(lambda, lambda'', z) |dlambda''|."""
    nn = h_minus.size
    if mu_plus.values.shape[0] != nn:
        raise GridMismatch("mu~+ and h- grids differ")
    ph = phase_matrix(CircleGrid(nn).nodes, z, energy)
    qm = _q_blocks(h_minus.values, -1, ph)
    return CircleFunction(mu_plus.grid, mu_plus.values + _apply_q(mu_plus.values, qm))


def circle_moment(values):
    """(1/(2 pi i)) int_T u(zeta) i zeta |dzeta| on the node grid."""
    nn = values.shape[0]
    nodes = CircleGrid(nn).nodes
    return np.einsum("j,jab->ab", nodes, values) / nn


@dataclass
class PointResult:
    z: complex
    v: np.ndarray
    mu_plus: CircleFunction
    mu_minus: CircleFunction
    residual: float


def _dz_mu_plus(ws, mu_vals):
    """Analytic d/dz of mu~+ from differentiating (I + B) with respect to z."""
    d = phase_dz(CircleGrid(ws.size).nodes, ws.energy)
    dqp = ws.q_plus * d[..., None, None]
    dqm = ws.q_minus * d[..., None, None]
    db = _to_right_matrix(_b_blocks(dqm, dqp))
    m = _circle_to_row(mu_vals)
    dm = ws.solve_right(-(m @ db))
    return _row_to_circle(dm, ws.size, ws.channels), dqm


def v_appr_point(h_plus: TorusKernel, h_minus: TorusKernel, z, energy, ws=None, mu_plus=None,
                 full=False):
    """V_appr(z) = 2 i E^{1/2} d/dz (1/(2 pi i)) int mu~-(z, zeta) i zeta |dzeta|."""
    ws = ws or assemble_b(h_plus, h_minus, z, energy)
    if mu_plus is None:
        mu_plus = solve_mu_tilde_plus(ws, method="direct")
    mp = mu_plus.values
    dmp, dqm = _dz_mu_plus(ws, mp)
    # d/dz of mu~- = mu~+ + Q_- mu~+ by the product rule
    dmm = dmp + _apply_q(dmp, ws.q_minus) + _apply_q(mp, dqm)
    v = 2j * np.sqrt(energy) * circle_moment(dmm)
    if not full:
        return v
    mm = mp + _apply_q(mp, ws.q_minus)
    return PointResult(complex(z), v, mu_plus, CircleFunction(mu_plus.grid, mm),
                       mupapp_residual(ws, mu_plus))


def v_appr_point_fd(h_plus, h_minus, z, energy, step=1e-4):
    """Wirtinger derivative by centred differences; cross-check for ``v_appr_point``."""
    def moment(zz):
        ws = assemble_b(h_plus, h_minus, zz, energy)
        mp = solve_mu_tilde_plus(ws, method="direct")
        return circle_moment(mu_tilde_minus(mp, h_minus, zz, energy).values)

    d1 = (moment(z + step) - moment(z - step)) / (2 * step)
    d2 = (moment(z + 1j * step) - moment(z - 1j * step)) / (2 * step)
    return 2j * np.sqrt(energy) * 0.5 * (d1 - 1j * d2)


def solve_mu_tilde_plus_background(ws: RhpWorkspace, ws1: RhpWorkspace, mu1_plus: CircleFunction):
    """Solve (Id + (Id + B^1)^{-1} dB) mu~+ = mu^{1,+} with dB = B - B^1."""
    if ws.size != ws1.size:
        raise GridMismatch("data and background workspaces differ in size")
    nn, n = ws.size, ws.channels
    db = ws.b_matrix() - ws1.b_matrix()
    # right action: u -> u dB (I + B^1)^{-1}
    inv1 = sla.lu_solve(ws1.factor(), np.eye(nn * n)).T
    a = np.eye(nn * n) + db @ inv1
    fac = lu_checked(a.T, "background-corrected system")
    rhs = _circle_to_row(mu1_plus.values)
    m = sla.lu_solve(fac, rhs.T).T
    return CircleFunction(ws.grid, _row_to_circle(m, nn, n))


def v_appr_background(h_plus, h_minus, h1_plus, h1_minus, mu1_plus, z, energy):
    """V_appr at z from data h_pm around a background with kernels h1_pm and mu^{1,+}."""
    ws = assemble_b(h_plus, h_minus, z, energy)
    ws1 = assemble_b(h1_plus, h1_minus, z, energy)
    mp = solve_mu_tilde_plus_background(ws, ws1, mu1_plus)
    return v_appr_point(h_plus, h_minus, z, energy, ws=ws, mu_plus=mp)


@dataclass
class ReconstructionField:
    points: np.ndarray  # complex z, shape (P,)
    values: np.ndarray  # (P, n, n)
    energy: float
    size: int
    source: str
    meta: dict = field(default_factory=dict)

    def max_error(self, truth):
        return float(np.abs(self.values - truth).max())


def born_point(h: TorusKernel, z, energy):
    """Linearised reconstruction (1/pi) E^{1/2} int w(z, lambda) i lambda |dlambda|."""
    nn = h.size
    nodes = CircleGrid(nn).nodes
    ph = phase_matrix(nodes, z, energy)
    d = phase_dz(nodes, energy)
    # sign(-i(lambda/lambda' - lambda'/lambda)) = chi(-) - chi(+) as half-circle weights
    wsgn = half_circle_weights(nn, -1) - half_circle_weights(nn, 1)
    w = np.pi * 1j * np.einsum("ij,ijab->iab", wsgn * ph * d, h.values)
    return np.sqrt(energy) / np.pi * 1j * (2 * np.pi / nn) * np.einsum("i,iab->ab", nodes, w)


def born_reconstruct(h: TorusKernel, energy, points, source="born"):
    pts = np.asarray(points, dtype=complex).ravel()
    vals = np.array([born_point(h, z, energy) for z in pts])
    return ReconstructionField(pts, vals, float(energy), h.size, source)


def reconstruct(h_plus, h_minus, energy, points, source="rhp"):
    pts = np.asarray(points, dtype=complex).ravel()
    vals = np.array([v_appr_point(h_plus, h_minus, z, energy) for z in pts])
    return ReconstructionField(pts, vals, float(energy), h_plus.size, source)


def default_points(potential, margin=0.25):
    """Grid nodes of the potential inside |z| <= rho + margin, as complex numbers."""
    x1, x2 = potential.coords()
    mask = x1**2 + x2**2 <= (potential.support_radius + margin) ** 2
    return (x1 + 1j * x2)[mask], mask
