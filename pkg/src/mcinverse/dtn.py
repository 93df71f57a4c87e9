"""Dirichlet-to-Neumann maps of -Laplace + V - E on the unit disk.

Kernels are nodal on N_b equispaced boundary points; applying one to boundary
data u means ``sum_j K[i, j] u_j * (2 pi / N_b)``.

The numeric map expands u(r, theta) in angular Fourier modes and uses
Chebyshev collocation in r on [-1, 1] folded by the parity of each mode, so
the origin is never a collocation node. V couples the modes; the coupled
system is solved by GMRES preconditioned with the angular mean of V, for
which each mode decouples and is solved exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import DomainError, GridMismatch, GridTooCoarse, ResonantEnergy
from .numerics import CircleGrid
from .potentials import MatrixField, evaluate

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


@dataclass
class BoundaryKernel:
    values: np.ndarray  # (N_b, N_b, n, n)
    energy: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        v = self.values
        if v.ndim != 4 or v.shape[0] != v.shape[1] or v.shape[2] != v.shape[3]:
            raise GridMismatch(f"BoundaryKernel values must be (N_b, N_b, n, n), got {v.shape}")

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[2]

    @property
    def grid(self):
        return CircleGrid(self.size)

    @property
    def weight(self):
        return 2 * np.pi / self.size

    def block_max(self):
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def l2_norm(self):
        w = self.weight
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * w * w))

    def __add__(self, other):
        _same(self, other)
        return BoundaryKernel(self.values + other.values, self.energy)

    def __sub__(self, other):
        return kernel_difference(self, other)


def _same(a, b):
    if a.values.shape != b.values.shape:
        raise GridMismatch("boundary kernels live on different grids")
    if not np.isclose(a.energy, b.energy, rtol=1e-14, atol=0):
        raise GridMismatch("boundary kernels belong to different energies")


def kernel_difference(a: BoundaryKernel, b: BoundaryKernel) -> BoundaryKernel:
    _same(a, b)
    return BoundaryKernel(a.values - b.values, a.energy)


def modal_to_nodal(sym):
    """Nodal kernel from a mode-space matrix sym[m', m] (FFT order), blocks n x n."""
    nb = sym.shape[0]
    theta = CircleGrid(nb).angles
    modes = CircleGrid(nb).modes
    e = np.exp(1j * np.outer(theta, modes))
    return np.einsum("im,mkab,jk->ijab", e, sym, e.conj()) / (2 * np.pi)


def zero_symbol(energy, nb):
    """sigma_m = sqrt(E) J'_|m|(sqrt E) / J_|m|(sqrt E) for the FFT-ordered modes."""
    from scipy import special

    if not energy > 0:
        raise DomainError("energy must be positive")
    k = np.sqrt(energy)
    m = np.abs(CircleGrid(nb).modes)
    jm = special.jv(m, k)
    djm = special.jvp(m, k)
    # relative test: J_m is tiny for m >> sqrt(E) without being near a zero
    if np.any(np.abs(jm) < 1e-12 * np.abs(djm)):
        raise ResonantEnergy(f"E={energy} is (numerically) a Dirichlet eigenvalue of the disk")
    return k * djm / jm


def dtn_zero_disk(energy, nb, n=1) -> BoundaryKernel:
    sigma = zero_symbol(energy, nb)
    sym = np.zeros((nb, nb, n, n), dtype=complex)
    idx = np.arange(nb)
    sym[idx, idx] = sigma[:, None, None] * np.eye(n)
    return BoundaryKernel(modal_to_nodal(sym), energy)


def _cheb(m):
    """Chebyshev-Lobatto points x_k = cos(k pi / m) and the differentiation matrix."""
    k = np.arange(m + 1)
    x = np.cos(np.pi * k / m)
    c = np.where((k == 0) | (k == m), 2.0, 1.0) * (-1.0) ** k
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(m + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


class _PolarOperator:
    """Mode-space discretisation on N_r positive Chebyshev radii (r_0 = 1 is the boundary)."""

    def __init__(self, potential, energy, nb, nr):
        self.energy = float(energy)
        self.nb = nb
        self.nr = nr
        x, d = _cheb(2 * nr - 1)
        d2 = d @ d
        r = x[:nr]
        self.r = r
        self.modes = CircleGrid(nb).modes
        mirror = (2 * nr - 1) - np.arange(nr)
        self.fold = {}
        for p in (1, -1):
            d1p = d[:nr, :nr] + p * d[:nr, mirror]
            d2p = d2[:nr, :nr] + p * d2[:nr, mirror]
            self.fold[p] = (d1p, d2p)
        theta = CircleGrid(nb).angles
        rr, tt = np.meshgrid(r[1:], theta, indexing="ij")
        if isinstance(potential, MatrixField):
            n = potential.channels
            v = evaluate(potential, rr * np.cos(tt), rr * np.sin(tt))
        else:
            n = potential
            v = np.zeros(rr.shape + (n, n), dtype=complex)
        self.n = n
        self.v = v  # (nr-1, nb, n, n) on interior radii
        self.vbar = v.mean(axis=1)
        self.vdev = v - self.vbar[:, None]
        self.coupled = bool(np.abs(self.vdev).max() > 0)
        self._build_blocks()

    def _radial(self, m):
        p = 1 if m % 2 == 0 else -1
        d1p, d2p = self.fold[p]
        r = self.r
        return d2p + d1p / r[:, None] - np.diag(m * m / r**2), d1p

    def _build_blocks(self):
        n, nr = self.n, self.nr
        ni = nr - 1
        self.inv = np.empty((self.nb, ni * n, ni * n), dtype=complex)
        self.bcol = np.empty((self.nb, ni), dtype=float)
        self.flux = []
        worst = 0.0
        for q, m in enumerate(self.modes):
            lap, d1p = self._radial(m)
            # interior rows, r-major then channel
            a = (np.kron(lap[1:, 1:], np.eye(n)) + self.energy * np.eye(ni * n)).astype(complex)
            for i in range(ni):
                a[i * n:(i + 1) * n, i * n:(i + 1) * n] -= self.vbar[i]
            cond = np.linalg.cond(a)
            worst = max(worst, cond)
            if not np.isfinite(cond) or cond > COND_LIMIT:
                raise ResonantEnergy(f"mode {m}: radial operator condition {cond:.3g} at E={self.energy}")
            self.inv[q] = np.linalg.inv(a)
            self.bcol[q] = lap[1:, 0]
            self.flux.append(d1p[0])
        self.flux = np.array(self.flux)  # (nb, nr)
        self.condition = worst

    # unknowns: u[q, i, a] for mode q, interior radius i, channel a
    def _shape(self):
        return (self.nb, self.nr - 1, self.n)

    def precondition(self, u):
        flat = u.reshape(self.nb, -1)
        return np.einsum("qxy,qy->qx", self.inv, flat).reshape(self._shape())

    def coupling(self, u):
        """Mode coefficients of (V - Vbar) u, computed on the angular nodes."""
        nodal = np.fft.ifft(u, axis=0) * self.nb  # (theta, r, a)
        prod = np.einsum("rtab,trb->tra", self.vdev, nodal)
        return np.fft.fft(prod, axis=0) / self.nb

    def solve(self, rhs, tol=1e-13):
        """Solve (L_m + E - V) u = rhs on interior nodes; returns u in mode space."""
        shape = self._shape()
        x0 = self.precondition(rhs)
        if not self.coupled:
            return x0
        size = x0.size

        def matvec(v):
            u = v.reshape(shape)
            return (u - self.precondition(self.coupling(u))).ravel()

        op = LinearOperator((size, size), matvec=matvec, dtype=complex)
        x, info = gmres(op, x0.ravel(), rtol=tol, atol=0.0, restart=60, maxiter=50)
        if info != 0:
            raise ResonantEnergy(f"coupled polar solve did not converge at E={self.energy} (info={info})")
        return x.reshape(shape)

    def dtn_symbol(self):
        """sym[m', m] (n x n blocks): flux in mode m' from Dirichlet data e^{i m theta} on the boundary."""
        nb, n = self.nb, self.n
        sym = np.zeros((nb, nb, n, n), dtype=complex)
        for q in range(nb):
            for c in range(n):
                rhs = np.zeros(self._shape(), dtype=complex)
                rhs[q, :, c] = -self.bcol[q]
                u = self.solve(rhs)
                fl = np.einsum("qi,qia->qa", self.flux[:, 1:], u)
                fl[q, c] += self.flux[q, 0]
                sym[:, q, :, c] = fl
        return sym


def dtn_symbol(potential, energy, nb, nr):
    return _PolarOperator(potential, energy, nb, nr).dtn_symbol()


def dtn_numeric(potential, energy, nb, nr=64, check=True, tol=1e-3) -> BoundaryKernel:
    """Numeric DtN kernel of -Laplace + V - E on the unit disk.

    ``potential`` is a MatrixField (fixtures are evaluated analytically at the
    polar nodes) or an integer channel count for V = 0. With ``check`` the
    map is recomputed on 2 N_r radii; a relative change above ``tol`` raises
    GridTooCoarse, otherwise the finer result is returned.
    """
    if nb % 2:
        raise GridMismatch("N_b must be even")
    sym = dtn_symbol(potential, energy, nb, nr)
    if check:
        fine = dtn_symbol(potential, energy, nb, 2 * nr)
        change = np.abs(fine - sym).max() / max(1.0, np.abs(fine).max())
        if change > tol:
            raise GridTooCoarse(f"radial self-convergence change {change:.2e} exceeds {tol:g}")
        sym = fine
    return BoundaryKernel(modal_to_nodal(sym), energy)


def dtn_difference(potential, energy, nb, nr=64, check=True) -> BoundaryKernel:
    """Phi(V) - Phi(0), both from the same numeric discretisation."""
    n = potential.channels
    return kernel_difference(dtn_numeric(potential, energy, nb, nr, check),
                             dtn_numeric(n, energy, nb, nr, check))


def apply_kernel(k: BoundaryKernel, u):
    """(K u)(x_i) = sum_j K[i, j] u_j (2 pi / N_b) for u of shape (N_b, n, n)."""
    return np.einsum("ijab,jbc->iac", k.values, u) * k.weight
