"""Exact scattering data for the background V_1 = diag(q_1, ..., q_n) on the unit disk.

Each channel is a constant scalar potential on D, so separation of variables
gives psi^+ and f in closed form (Bessel series). h^1_pm follow from f by the
row equations of ``algo2_h`` and psi^1_pm from psi^+ through the half-circle
relation between the Faddeev and outgoing solutions.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .dtn import BoundaryKernel, modal_to_nodal
from .errors import DomainError, ResonantEnergy
from .forward import TorusKernel
from .numerics import CircleFunction, CircleGrid, half_circle_weights
from .recover_h import BoundaryTrace, algo2_h


def mie_coefficients(energy, q, mmax):
    """Exterior (alpha_m) and interior (beta_m) coefficients for m = 0..mmax.

    Outside the disk psi^+ = sum_m i^m (J_m(kr) + alpha_m H_m(kr)) e^{im(theta - phi)},
    inside psi^+ = sum_m i^m beta_m J_m(kappa r) e^{im(theta - phi)} with kappa^2 = E - q.
    """
    k = np.sqrt(energy)
    kap = np.sqrt(complex(energy - q))
    m = np.arange(mmax + 1)
    jk, djk = special.jv(m, k), special.jvp(m, k)
    hk, dhk = special.hankel1(m, k), special.h1vp(m, k)
    jq, djq = special.jv(m, kap), special.jvp(m, kap)
    den = k * dhk * jq - kap * djq * hk
    alpha = (kap * djq * jk - k * djk * jq) / den
    beta = (2j / np.pi) / den
    return alpha, beta


def _mmax(energy):
    return int(np.sqrt(energy) + 40)


class DiskBackground:
    """Background data for V_1 = diag(q) 1_D at a fixed energy."""

    def __init__(self, diagonal, energy):
        self.q = np.asarray(diagonal, dtype=float)
        if self.q.ndim != 1:
            raise DomainError("diagonal must be a vector")
        self.energy = float(energy)
        self.k = np.sqrt(self.energy)
        self.mmax = _mmax(self.energy)
        coeffs = [mie_coefficients(self.energy, qc, self.mmax) for qc in self.q]
        self.alpha = np.array([c[0] for c in coeffs])  # (n, mmax+1)
        self.beta = np.array([c[1] for c in coeffs])

    @property
    def channels(self):
        return len(self.q)

    def _series(self, coef, angles):
        """sum_{|m| <= mmax} coef[c, |m|] e^{i m angles} for every channel."""
        m = np.arange(-self.mmax, self.mmax + 1)
        c = coef[:, np.abs(m)]
        return np.einsum("cm,...m->...c", c, np.exp(1j * np.multiply.outer(angles, m)))

    def amplitude(self, size) -> TorusKernel:
        """f(lambda, lambda') = (2 pi)^-1 (2i/pi) sum_m alpha_m e^{im(phi' - phi)}."""
        ang = CircleGrid(size).angles
        diff = ang[None, :] - ang[:, None]
        s = self._series(self.alpha, diff) * (2j / np.pi) / (2 * np.pi)
        vals = np.zeros((size, size, self.channels, self.channels), dtype=complex)
        idx = np.arange(self.channels)
        vals[:, :, idx, idx] = s
        return TorusKernel(vals, self.energy)

    def h_pm(self, sign, size) -> TorusKernel:
        return algo2_h(self.amplitude(size), sign)

    def psi_plus(self, x1, x2, angle):
        """psi^+(x, k) with k at ``angle``; diagonal values, shape x.shape + (n, n)."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        r = np.hypot(x1, x2)
        th = np.arctan2(x2, x1) - angle
        m = np.arange(-self.mmax, self.mmax + 1)
        am = np.abs(m)
        phase = (1j ** am) * np.exp(1j * np.multiply.outer(th, m))  # (..., M)
        out = np.zeros(r.shape + (self.channels,), dtype=complex)
        inside = r < 1.0
        for c, qc in enumerate(self.q):
            kap = np.sqrt(complex(self.energy - qc))
            ri = r[inside]
            radial_in = self.beta[c, am] * special.jv(am, ri[:, None] * kap)
            out[inside, c] = np.sum(phase[inside] * radial_in, axis=-1)
            ro = r[~inside]
            kr = ro[:, None] * self.k
            radial_out = special.jv(am, kr) + self.alpha[c, am] * special.hankel1(am, kr)
            out[~inside, c] = np.sum(phase[~inside] * radial_out, axis=-1)
        res = np.zeros(out.shape + (self.channels,), dtype=complex)
        idx = np.arange(self.channels)
        res[..., idx, idx] = out
        return res

    def mu_plus(self, z, size) -> CircleFunction:
        """mu^{1,+}(z, lambda_j) = e^{-i k_j z} psi^+(z, k_j) on the circle grid."""
        grid = CircleGrid(size)
        x1, x2 = np.real(z), np.imag(z)
        vals = []
        for a in grid.angles:
            ph = np.exp(-1j * self.k * (np.cos(a) * x1 + np.sin(a) * x2))
            vals.append(ph * self.psi_plus(np.array(x1), np.array(x2), a))
        return CircleFunction(grid, np.array(vals))

    def boundary_traces(self, nb, size, sign, h=None):
        """psi^1_pm on the N_b boundary nodes for each of the ``size`` torus angles."""
        grid = CircleGrid(size)
        t = CircleGrid(nb).angles
        x1, x2 = np.cos(t), np.sin(t)
        plus = np.array([self.psi_plus(x1, x2, a) for a in grid.angles])  # (k, nb, n, n)
        h = h if h is not None else self.h_pm(sign, size)
        w = half_circle_weights(size, sign)
        corr = np.pi * 1j * np.einsum("kj,jxab,kjbc->kxac", w, plus, h.values)
        vals = plus + corr
        return [BoundaryTrace(vals[i], self.energy, a, sign) for i, a in enumerate(grid.angles)]

    def dtn(self, nb) -> BoundaryKernel:
        """Phi_1 from the per-channel disk symbols kappa J'_m(kappa) / J_m(kappa)."""
        m = np.abs(CircleGrid(nb).modes)
        sym = np.zeros((nb, nb, self.channels, self.channels), dtype=complex)
        idx = np.arange(nb)
        for c, qc in enumerate(self.q):
            kap = np.sqrt(complex(self.energy - qc))
            jm = special.jv(m, kap)
            djm = special.jvp(m, kap)
            if np.any(np.abs(jm) < 1e-12 * np.abs(djm)):
                raise ResonantEnergy(f"E={self.energy} is a Dirichlet eigenvalue for channel {c}")
            sym[idx, idx, c, c] = kap * djm / jm
        return BoundaryKernel(modal_to_nodal(sym), self.energy)
