"""Forward scattering: Green functions, Lippmann-Schwinger solves, f and h_pm.

The volume integral operator is applied spectrally. The outgoing kernel
G^+ is truncated at a radius R covering every (target, source) pair and its
Fourier transform is known in closed form, so one zero-padded FFT applies
the convolution exactly for band-limited densities. The Faddeev kernels
G_pm differ from G^+ by a smooth half-circle superposition of plane waves,
applied with Gauss-Legendre nodes on the half circle.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import DomainError, GridMismatch, NearSingular, NoConvergence
from .numerics import CircleGrid, gauss_legendre_arc, hankel_h1_0
from .potentials import MatrixField

log = logging.getLogger(__name__)

DEFAULT_ARC_NODES = 512


@dataclass(frozen=True)
class WaveParams:
    energy: float
    angle: float
    sign: int = 1

    def __post_init__(self):
        if not self.energy > 0:
            raise DomainError("energy must be positive")
        if self.sign not in (1, -1):
            raise DomainError("sign must be +1 or -1")

    @property
    def k(self):
        return np.sqrt(self.energy) * np.array([np.cos(self.angle), np.sin(self.angle)])

    @property
    def k_perp_hat(self):
        return np.array([-np.sin(self.angle), np.cos(self.angle)])


@dataclass
class TorusKernel:
    """Samples K(lambda_j, lambda'_l) on T x T, shape ``(N, N, n, n)``."""

    values: np.ndarray
    energy: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        v = self.values
        if v.ndim != 4 or v.shape[0] != v.shape[1]:
            raise GridMismatch(f"TorusKernel values must be (N, N, n, n), got {v.shape}")

    @property
    def grid(self):
        return CircleGrid(self.values.shape[0])

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[2]

    def l2_norm(self):
        w = self.grid.weight
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * w * w))

    def __sub__(self, other):
        return TorusKernel(self.values - other.values, self.energy)


def half_arc(angle, sign):
    """Endpoints of the half circle {theta : sign * theta . k_perp >= 0}."""
    if sign > 0:
        return angle, angle + np.pi
    return angle - np.pi, angle


def green_g_plus(x, k):
    """Outgoing Green function -(i/4) H^1_0(|x||k|)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1) * np.linalg.norm(k)
    if np.any(r <= 0):
        raise DomainError("G^+ is singular at x = 0")
    return -0.25j * hankel_h1_0(r)


def plane_wave_correction(x, k, sign, arc_nodes=DEFAULT_ARC_NODES):
    """(i / 4 pi) * integral over the half circle of exp(i |k| theta . x)."""
    x = np.asarray(x, dtype=float)
    kk = np.linalg.norm(k)
    angle = np.arctan2(k[1], k[0])
    theta, w = gauss_legendre_arc(*half_arc(angle, sign), arc_nodes)
    phase = kk * (x[..., 0, None] * np.cos(theta) + x[..., 1, None] * np.sin(theta))
    return (0.25j / np.pi) * (np.exp(1j * phase) @ w)


def green_g_pm(x, k, sign, arc_nodes=DEFAULT_ARC_NODES):
    """Faddeev kernel G_pm(x, k) = G^+ + (i/4pi) int chi_+(+-theta.k_perp) e^{i|k|theta x}.

    At x = 0 only the smooth half-circle part is returned.
    """
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(k) <= 0:
        raise DomainError("|k| must be positive")
    corr = plane_wave_correction(x, k, sign, arc_nodes)
    r = np.linalg.norm(x, axis=-1)
    if np.ndim(r) == 0:
        return corr if r == 0 else corr + green_g_plus(x, k)
    out = np.array(corr, dtype=complex)
    nz = r > 0
    out[nz] += green_g_plus(x[nz], k)
    return out


def truncated_green_transform(s, kappa, radius):
    """Fourier transform of G^+ restricted to the disk |x| < radius."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape, dtype=complex)
    near = np.abs(s * s - kappa * kappa) < 1e-6 * kappa * kappa
    far = ~near
    out[far] = _trunc_ft(s[far], kappa, radius)
    if np.any(near):
        # removable singularity at s = kappa: average symmetric neighbours
        d = 1e-4 * kappa
        out[near] = 0.5 * (_trunc_ft(s[near] - d, kappa, radius) + _trunc_ft(s[near] + d, kappa, radius))
    return out


def _trunc_ft(s, kappa, radius):
    h0 = special.hankel1(0, kappa * radius)
    h1 = special.hankel1(1, kappa * radius)
    bracket = s * h0 * special.j1(s * radius) - kappa * h1 * special.j0(s * radius)
    return (-1.0 - 0.5j * np.pi * radius * bracket) / (s * s - kappa * kappa)


def _fft_size(n):
    m = 8
    while m < n:
        m *= 2
    for cand in (m * 3 // 4, m * 5 // 8):
        if cand >= n and cand % 2 == 0:
            m = min(m, cand)
    return m


class LippmannSchwinger:
    """Solver for psi = e^{i q x} I + int G(x - y, k) V(y) psi(y) dy on the grid of V.

    ``solve`` returns psi at every grid node, shape ``(N, N, n, n)``.
    The kernel G is G^+ (``green='plus'``) or the Faddeev limit G_pm.
    """

    def __init__(self, potential: MatrixField, energy, arc_nodes=256, tol=1e-12, maxiter=400):
        if not energy > 0:
            raise DomainError("energy must be positive")
        self.V = potential
        self.energy = float(energy)
        self.kappa = np.sqrt(self.energy)
        self.arc_nodes = arc_nodes
        self.tol = tol
        self.maxiter = maxiter
        n = potential.size
        h = potential.step
        L = potential.half_width
        rho = potential.support_radius
        self.radius = np.sqrt(2.0) * L + rho
        self.pad = _fft_size(int(np.ceil((L + rho + self.radius) / h)) + 1)
        m = self.pad
        eta = 2 * np.pi * np.fft.fftfreq(m, h)
        s = np.hypot(eta[:, None], eta[None, :])
        self._ghat = truncated_green_transform(s, self.kappa, self.radius)
        self._x = potential.axis
        self._vmat = potential.values
        self.iterations = []

    # -- operator pieces -------------------------------------------------
    def convolve_plus(self, phi):
        """int G^+(x - y) phi(y) dy at the grid nodes; phi has shape (N, N, ...)."""
        n = phi.shape[0]
        m = self.pad
        buf = np.zeros((m, m) + phi.shape[2:], dtype=complex)
        buf[:n, :n] = phi
        ghat = self._ghat.reshape((m, m) + (1,) * (phi.ndim - 2))
        out = np.fft.ifft2(np.fft.fft2(buf, axes=(0, 1)) * ghat, axes=(0, 1))
        return out[:n, :n]

    def _arc(self, angle, sign):
        theta, w = gauss_legendre_arc(*half_arc(angle, sign), self.arc_nodes)
        x = self._x
        a1 = np.exp(-1j * self.kappa * np.outer(np.cos(theta), x))
        a2 = np.exp(-1j * self.kappa * np.outer(np.sin(theta), x))
        return a1, a2, w

    def convolve_arc(self, phi, arc):
        """(i / 4 pi) int_half e^{i kappa theta x} [int e^{-i kappa theta y} phi(y) dy] dtheta."""
        a1, a2, w = arc
        n = phi.shape[0]
        rest = phi.shape[2:]
        h2 = self.V.step ** 2
        flat = phi.reshape(n, n, -1)
        t = np.einsum("qi,ijr->qjr", a1, flat)
        coef = np.einsum("qjr,qj->qr", t, a2) * h2
        coef *= ((0.25j / np.pi) * w)[:, None]
        t2 = np.einsum("qj,qr->qjr", a2.conj(), coef)
        out = np.einsum("qi,qjr->ijr", a1.conj(), t2)
        return out.reshape((n, n) + rest)

    def apply_kernel(self, phi, green="plus", angle=None, sign=1, arc=None):
        out = self.convolve_plus(phi)
        if green == "pm":
            if arc is None:
                arc = self._arc(angle, sign)
            out = out + self.convolve_arc(phi, arc)
        return out

    def potential_times(self, psi):
        return np.einsum("xyij,xyjk->xyik", self._vmat, psi)

    # -- solves ----------------------------------------------------------
    def plane_wave(self, angle):
        x1, x2 = self.V.coords()
        e = np.exp(1j * self.kappa * (np.cos(angle) * x1 + np.sin(angle) * x2))
        n = self.V.channels
        return e[..., None, None] * np.eye(n)

    def solve(self, angle, green="plus", sign=1, incident_angle=None):
        """Solve for psi with kernel direction ``angle`` and incident wave ``incident_angle``."""
        if green not in ("plus", "pm"):
            raise ValueError(f"unknown green kernel {green!r}")
        inc = angle if incident_angle is None else incident_angle
        rhs = self.plane_wave(inc)
        shape = rhs.shape
        if not np.any(self._vmat):
            return rhs
        arc = self._arc(angle, sign) if green == "pm" else None

        def matvec(v):
            psi = v.reshape(shape)
            res = psi - self.apply_kernel(self.potential_times(psi), green, arc=arc)
            return res.ravel()

        size = rhs.size
        op = LinearOperator((size, size), matvec=matvec, dtype=complex)
        b = rhs.ravel()
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = gmres(op, b, rtol=self.tol, atol=0.0, restart=80, maxiter=self.maxiter,
                        callback=cb, callback_type="pr_norm")
        resid = np.linalg.norm(matvec(x) - b) / np.linalg.norm(b)
        self.iterations.append(count[0])
        if info != 0 or not np.isfinite(resid):
            raise NoConvergence(f"GMRES did not converge (info={info}, residual={resid:.2e})", resid)
        if resid > 1e3 * self.tol:
            raise NearSingular(f"Lippmann-Schwinger residual {resid:.2e} stagnated", None)
        return x.reshape(shape)

    def residual(self, psi, angle, green="plus", sign=1, incident_angle=None):
        """Max-norm residual of the discrete equation written for mu = e^{-ikx} psi."""
        inc = angle if incident_angle is None else incident_angle
        rhs = self.plane_wave(inc)
        res = psi - rhs - self.apply_kernel(self.potential_times(psi), green, angle, sign)
        return float(np.abs(res).max())

    def amplitude_row(self, psi, out_angles):
        """(2 pi)^-2 int e^{-i l x} V(x) psi(x) dx for every outgoing direction l."""
        vpsi = self.potential_times(psi)
        x = self._x
        c = np.cos(out_angles)
        s = np.sin(out_angles)
        b1 = np.exp(-1j * self.kappa * np.outer(c, x))
        b2 = np.exp(-1j * self.kappa * np.outer(s, x))
        t = np.einsum("li,ijab->ljab", b1, vpsi)
        return np.einsum("ljab,lj->lab", t, b2) * self.V.step ** 2 / (2 * np.pi) ** 2


def _torus_angles(torus_grid):
    grid = torus_grid if isinstance(torus_grid, CircleGrid) else CircleGrid(int(torus_grid))
    return grid, grid.angles


def scattering_amplitude(potential, energy, torus_grid, solver=None):
    """f(lambda, lambda', E) on the torus grid from psi^+ solves."""
    grid, ang = _torus_angles(torus_grid)
    solver = solver or LippmannSchwinger(potential, energy)
    n = potential.channels
    vals = np.zeros((grid.size, grid.size, n, n), dtype=complex)
    for j, a in enumerate(ang):
        psi = solver.solve(a, "plus")
        vals[j] = solver.amplitude_row(psi, ang)
    return TorusKernel(vals, energy)


def h_pm_direct(potential, energy, sign, torus_grid, solver=None):
    """h_pm(lambda, lambda', E) from psi_pm solves with the Faddeev kernel G_pm."""
    grid, ang = _torus_angles(torus_grid)
    solver = solver or LippmannSchwinger(potential, energy)
    n = potential.channels
    vals = np.zeros((grid.size, grid.size, n, n), dtype=complex)
    for j, a in enumerate(ang):
        psi = solver.solve(a, "pm", sign)
        vals[j] = solver.amplitude_row(psi, ang)
    return TorusKernel(vals, energy)


def psi1_two_wave(potential, k, l, sign, solver=None):
    """psi^1_mp(x, k, l): incident wave e^{ilx}, Faddeev kernel G_mp(., k).

    ``sign`` selects the kernel G_sign directly (pass -1 for the upper
    choice in psi^1_mp).
    """
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    if not np.isclose(k @ k, l @ l, rtol=1e-12):
        raise DomainError("psi1_two_wave needs k^2 = l^2")
    solver = solver or LippmannSchwinger(potential, float(k @ k))
    return solver.solve(np.arctan2(k[1], k[0]), "pm", sign, incident_angle=np.arctan2(l[1], l[0]))


def mu_from_psi(potential, psi, angle, energy):
    """mu = e^{-ikx} psi on the grid of the potential."""
    x1, x2 = potential.coords()
    kap = np.sqrt(energy)
    ph = np.exp(-1j * kap * (np.cos(angle) * x1 + np.sin(angle) * x2))
    return ph[..., None, None] * psi


def solve_lippmann_schwinger(potential, params: WaveParams, greens="plus", solver=None):
    """mu(., k) = e^{-ikx} psi(., k) as a MatrixField on the grid of V."""
    solver = solver or LippmannSchwinger(potential, params.energy)
    psi = solver.solve(params.angle, greens, params.sign)
    mu = mu_from_psi(potential, psi, params.angle, params.energy)
    return MatrixField(mu, potential.half_width, potential.half_width,
                       dict(kind="mu", energy=params.energy, angle=params.angle,
                            greens=greens, sign=params.sign))
