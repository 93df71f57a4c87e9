"""Special functions, circle grids and the spectral Cauchy projectors.

Functions on the unit circle T are stored as arrays of shape ``(N, ...)``
sampled at ``lambda_j = exp(2 pi i j / N)``. Trailing axes hold the matrix
entries and are carried along untouched by every transform here.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError, GridMismatch

EULER_GAMMA = 0.57721566490153286061


def hankel_h1_0(x):
    """H^1_0(x) = J_0(x) + i Y_0(x) for real x > 0 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("hankel_h1_0 needs x > 0")
    out = special.hankel1(0, x)
    return out[()] if out.ndim == 0 else out


def bessel_j(order, x, derivative=False):
    """J_m(x), or J'_m(x) with ``derivative=True``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("bessel_j needs x > 0")
    if np.any(np.asarray(order) < 0):
        raise DomainError("bessel_j needs a nonnegative order")
    out = special.jvp(order, x) if derivative else special.jv(order, x)
    return out[()] if np.ndim(out) == 0 else out


def chi_plus(s):
    """Heaviside step with the convention chi_+(0) = 1."""
    return np.where(np.asarray(s) >= 0, 1.0, 0.0)[()]


@dataclass(frozen=True)
class CircleGrid:
    size: int

    def __post_init__(self):
        if self.size < 2 or self.size % 2:
            raise GridMismatch(f"circle grid size must be even, got {self.size}")

    @property
    def angles(self):
        return 2 * np.pi * np.arange(self.size) / self.size

    @property
    def nodes(self):
        return np.exp(1j * self.angles)

    @property
    def weight(self):
        return 2 * np.pi / self.size

    @property
    def modes(self):
        """Integer frequencies in FFT order, k in [-N/2, N/2)."""
        return np.fft.fftfreq(self.size, 1.0 / self.size).astype(int)


@dataclass
class CircleFunction:
    grid: CircleGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape[0] != self.grid.size:
            raise GridMismatch("values length does not match the circle grid")


def _values(u):
    return (u.grid, u.values) if isinstance(u, CircleFunction) else (None, np.asarray(u))


def circle_fourier(u, direction="forward"):
    """Unitary DFT along the angular axis.

    ``forward`` maps samples to coefficients in FFT order (see
    ``CircleGrid.modes``); ``inverse`` maps them back.
    """
    _, vals = _values(u)
    if direction == "forward":
        return np.fft.fft(vals, axis=0, norm="ortho")
    if direction == "inverse":
        return np.fft.ifft(vals, axis=0, norm="ortho")
    raise ValueError(f"unknown direction {direction!r}")


def cauchy_project(u, side):
    """Boundary values of the Cauchy integral of u on T.

    ``side='inside'`` gives C_+ u (limit from |lambda| < 1), the sum of the
    nonnegative Fourier modes. ``side='outside'`` gives C_- u, minus the sum
    of the negative modes; the Nyquist mode -N/2 is assigned to C_-.
    """
    grid, vals = _values(u)
    n = vals.shape[0]
    if n % 2:
        raise GridMismatch("cauchy_project needs an even grid")
    coef = np.fft.fft(vals, axis=0)
    mask = _mode_mask(n, side)
    out = np.fft.ifft(coef * mask.reshape((n,) + (1,) * (vals.ndim - 1)), axis=0)
    if grid is not None:
        return CircleFunction(grid, out)
    return out


def _mode_mask(n, side):
    k = np.fft.fftfreq(n, 1.0 / n)
    if side == "inside":
        return (k >= 0).astype(float)
    if side == "outside":
        return -(k < 0).astype(float)
    raise ValueError(f"unknown side {side!r}")


@lru_cache(maxsize=64)
def projector_matrix(n, side):
    """Dense N x N matrix of ``cauchy_project`` acting on nodal values."""
    eye = np.eye(n)
    m = cauchy_project(eye, side)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=64)
def half_circle_weights(n, sign):
    """Spectral quadrature for integrals over half of T.

    Returns W with ``sum_j W[i, j] F(lambda_j)`` approximating
    the integral of F over the arc {theta : chi_+(sign * sin(theta - theta_i)) = 1},
    i.e. [theta_i, theta_i + pi] for sign=+1 and [theta_i - pi, theta_i] for
    sign=-1. The trigonometric interpolant of F is integrated exactly, so
    the rule is spectrally accurate for smooth F even though the arc
    endpoints fall on nodes. Rows are the arc anchors theta_i.
    """
    if n % 2:
        raise GridMismatch("half_circle_weights needs an even grid")
    theta = 2 * np.pi * np.arange(n) / n
    m = np.arange(1, n // 2 + 1)
    # odd modes integrate to -2/(im) e^{ima} on [a, a+pi]; even nonzero modes vanish
    coeff = np.where(m % 2 == 1, 1.0, 0.0)
    coeff[-1] *= 0.5  # Nyquist mode split symmetrically
    t = theta[:, None] - theta[None, :]  # a - theta_j
    s = np.sin(t[..., None] * m) / m
    w = np.pi / n - (4.0 / n) * np.tensordot(s, coeff, axes=([2], [0]))
    if sign < 0:
        w = 2 * np.pi / n - w
    w.setflags(write=False)
    return w


def kress_log_weights(n):
    """Weights R_j(t_i) for the integral of ln(4 sin^2((t - s)/2)) g(s) ds.

    Product quadrature on n equispaced nodes (n even), exact for
    trigonometric polynomials g of degree < n/2.
    """
    if n % 2:
        raise GridMismatch("kress_log_weights needs an even grid")
    half = n // 2
    t = 2 * np.pi * np.arange(n) / n
    d = t[:, None] - t[None, :]
    m = np.arange(1, half)
    r = -(4 * np.pi / n) * np.tensordot(np.cos(d[..., None] * m), 1.0 / m, axes=([2], [0]))
    r -= (4 * np.pi / n**2) * np.cos(half * d)
    return r


def gauss_legendre_arc(a, b, count):
    """Gauss-Legendre nodes and weights on the interval [a, b]."""
    x, w = np.polynomial.legendre.leggauss(count)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def fourier_interpolate(values, new_size, axis=0):
    """Band-limited resampling of periodic samples to ``new_size`` nodes."""
    values = np.moveaxis(np.asarray(values, dtype=complex), axis, 0)
    n = values.shape[0]
    if new_size == n:
        return np.moveaxis(values.copy(), 0, axis)
    coef = np.fft.fft(values, axis=0)
    out = np.zeros((new_size,) + values.shape[1:], dtype=complex)
    m = min(n, new_size) // 2
    out[:m] = coef[:m]
    out[new_size - m + 1:] = coef[n - m + 1:]
    if new_size > n:
        # split the old Nyquist mode between +-n/2
        out[m] = 0.5 * coef[m]
        out[new_size - m] = 0.5 * coef[m]
    else:
        out[m] = coef[m] + coef[n - m]
    out *= new_size / n
    return np.moveaxis(np.fft.ifft(out, axis=0), 0, axis)
