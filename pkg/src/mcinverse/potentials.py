"""Matrix-valued potentials on a Cartesian grid, their Fourier transforms and norms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GridMismatch


@dataclass(frozen=True)
class MatrixField:
    """n x n complex matrices sampled on the square [-L, L]^2.

    Node (i, j) sits at ``(-L + i h, -L + j h)`` with ``h = 2L / N``, so the
    origin is the node ``(N/2, N/2)``. ``values`` has shape ``(N, N, n, n)``.
    """

    values: np.ndarray
    half_width: float
    support_radius: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim != 4 or vals.shape[0] != vals.shape[1] or vals.shape[2] != vals.shape[3]:
            raise GridMismatch(f"MatrixField values must be (N, N, n, n), got {vals.shape}")
        if vals.shape[0] < 8:
            raise GridMismatch("MatrixField needs at least 8 nodes per side")
        if not self.support_radius <= self.half_width + 1e-12:
            raise DomainError("support radius exceeds the grid half-width")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def channels(self):
        return self.values.shape[2]

    @property
    def step(self):
        return 2 * self.half_width / self.size

    @property
    def axis(self):
        return -self.half_width + self.step * np.arange(self.size)

    def coords(self):
        x = self.axis
        return np.meshgrid(x, x, indexing="ij")

    def with_values(self, values, **meta):
        """Same grid, new samples; the analytic description is dropped."""
        base = {k: v for k, v in self.meta.items() if k not in ("kind", "parts")}
        return MatrixField(values, self.half_width, self.support_radius, {**base, **meta})

    def scaled(self, factor):
        meta = dict(self.meta)
        if "amplitude" in meta and np.isreal(factor):
            meta["amplitude"] = meta["amplitude"] * float(np.real(factor))
        elif meta.get("kind") is not None:
            meta = {}
        return MatrixField(factor * self.values, self.half_width, self.support_radius, meta)

    def max_norm(self):
        return float(np.abs(self.values).max()) if self.values.size else 0.0


@dataclass(frozen=True)
class FrequencyField:
    """Samples of V^(p) on the lattice p = step * (k1, k2), k in [-M/2, M/2)."""

    values: np.ndarray
    step: float

    @property
    def size(self):
        return self.values.shape[0]

    @property
    def axis(self):
        m = self.size
        return self.step * (np.arange(m) - m // 2)


@dataclass(frozen=True)
class SmoothnessSpec:
    m: int = 3
    eps: float = 1.0
    sigma: float = 0.5

    def __post_init__(self):
        if self.m < 3:
            raise DomainError("smoothness m must be at least 3")
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if not 0 < self.sigma < 1:
            raise DomainError("sigma must lie in (0, 1)")

    @property
    def alpha(self):
        return min(1.0, self.eps)

    @property
    def s(self):
        return float(self.m)


def _default_shape(n):
    """Fixed Hermitian channel-coupling matrix used by the scalar-profile fixtures."""
    shape = np.eye(n, dtype=complex)
    for i in range(n):
        shape[i, i] = 1.0 - 0.25 * i / max(n - 1, 1)
        for j in range(i + 1, n):
            shape[i, j] = 0.3 + 0.2j
            shape[j, i] = 0.3 - 0.2j
    return shape


KINDS = ("gaussian_bump", "smooth_compact", "polynomial_bump",
         "hermitian_random_smooth", "diagonal_constant_on_D")


def make_test_potential(kind, n=1, amplitude=1.0, width=0.35, radius=1.0,
                        half_width=1.5, size=64, matrix=None, smoothness=3,
                        seed=0, diagonal=None, bumps=3):
    """Build one of the fixture potentials.

    ``smooth_compact`` is a C-infinity bump exp(1 - 1/(1 - r^2/radius^2)),
    ``polynomial_bump`` is (1 - r^2/radius^2)^smoothness (exactly
    ``smoothness`` derivatives in L^1), ``gaussian_bump`` is
    exp(-r^2/width^2) and ``diagonal_constant_on_D`` is diag(diagonal) on the
    closed disk of the given radius. ``hermitian_random_smooth`` sums a few
    smooth compact bumps with seeded random Hermitian coefficients, so its
    values at different points do not commute.
    """
    if kind not in KINDS:
        raise DomainError(f"unknown potential kind {kind!r}")
    if not np.isfinite(amplitude):
        raise DomainError("amplitude must be finite")
    if radius > half_width:
        raise DomainError("support radius exceeds the grid half-width")
    if size % 2:
        raise GridMismatch("grid size must be even")
    h = 2 * half_width / size
    x = -half_width + h * np.arange(size)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    shape = _default_shape(n) if matrix is None else np.asarray(matrix, dtype=complex)
    if shape.shape != (n, n):
        raise DomainError("matrix must be n x n")
    meta = dict(kind=kind, n=n, amplitude=amplitude, width=width, radius=radius,
                matrix=[[(c.real, c.imag) for c in row] for row in shape])
    support = radius
    if kind == "polynomial_bump":
        meta["smoothness"] = smoothness
    elif kind == "gaussian_bump":
        # numerically zero (< 1e-16 relative) beyond this radius
        support = min(half_width, width * np.sqrt(np.log(1e16)))
    elif kind == "diagonal_constant_on_D":
        diag = np.ones(n) if diagonal is None else np.asarray(diagonal, dtype=float)
        if diag.shape != (n,):
            raise DomainError("diagonal must have n entries")
        meta["diagonal"] = diag.tolist()
    elif kind == "hermitian_random_smooth":
        rng = np.random.default_rng(seed)
        parts = []
        for _ in range(bumps):
            ang = rng.uniform(0, 2 * np.pi)
            off = rng.uniform(0.0, 0.35) * radius
            sub = rng.uniform(0.45, 0.6) * radius
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            herm = 0.5 * (a + a.conj().T)
            herm /= np.abs(herm).max()
            parts.append(dict(center=[off * np.cos(ang), off * np.sin(ang)], radius=sub,
                              coef=[[(c.real, c.imag) for c in row] for row in herm]))
        meta["seed"] = seed
        meta["bumps"] = parts
    vals = fixture_values(meta, x1, x2)
    return MatrixField(vals, half_width, support, meta)


def _unpack(mat):
    return np.array([[complex(*c) for c in row] for row in mat])


def fixture_values(meta, x1, x2):
    """Evaluate a fixture described by ``meta`` at arbitrary points."""
    kind = meta["kind"]
    if kind == "sum":
        return sum(fixture_values(part, x1, x2) for part in meta["parts"])
    amp = meta["amplitude"]
    radius = meta["radius"]
    r2 = np.asarray(x1) ** 2 + np.asarray(x2) ** 2
    if kind == "smooth_compact":
        return amp * _compact_bump(r2 / radius**2)[..., None, None] * _unpack(meta["matrix"])
    if kind == "polynomial_bump":
        t = np.clip(1.0 - r2 / radius**2, 0.0, None)
        return amp * (t ** meta["smoothness"])[..., None, None] * _unpack(meta["matrix"])
    if kind == "gaussian_bump":
        prof = np.exp(-r2 / meta["width"] ** 2)
        return amp * prof[..., None, None] * _unpack(meta["matrix"])
    if kind == "diagonal_constant_on_D":
        inside = (r2 <= radius**2 * (1 + 1e-12)).astype(float)
        return amp * inside[..., None, None] * np.diag(meta["diagonal"]).astype(complex)
    if kind == "hermitian_random_smooth":
        n = meta["n"]
        out = np.zeros(np.shape(r2) + (n, n), dtype=complex)
        for b in meta["bumps"]:
            c1, c2 = b["center"]
            d2 = (x1 - c1) ** 2 + (x2 - c2) ** 2
            out += _compact_bump(d2 / b["radius"] ** 2)[..., None, None] * _unpack(b["coef"])
        return amp * out
    raise DomainError(f"no analytic evaluator for kind {kind!r}")


def add_fields(a, b):
    """Sum of two fields on the same grid, keeping an analytic description when both have one."""
    if a.values.shape != b.values.shape or a.half_width != b.half_width:
        raise GridMismatch("fields live on different grids")
    meta = dict(kind="sum", parts=[a.meta, b.meta]) if _analytic(a) and _analytic(b) else {}
    return MatrixField(a.values + b.values, a.half_width,
                       max(a.support_radius, b.support_radius), meta)


def _analytic(f):
    kind = f.meta.get("kind")
    return kind in KINDS or kind == "sum"


def evaluate(field_, x1, x2):
    """Values of V at arbitrary points.

    Fixtures are evaluated from their analytic description; other fields use
    the trigonometric interpolant of the samples on the periodic box.
    """
    if _analytic(field_):
        return fixture_values(field_.meta, x1, x2)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    m = field_.size
    L = field_.half_width
    coef = np.fft.fft2(field_.values, axes=(0, 1)) / (m * m)
    k = np.fft.fftfreq(m, 1.0 / m)
    # symmetric treatment of the Nyquist column keeps real data real
    wgt = np.where(np.abs(k) == m // 2, 0.5, 1.0)
    freq = np.pi * k / L
    e1 = np.exp(1j * np.outer((x1.ravel() + L), freq)) * wgt
    e2 = np.exp(1j * np.outer((x2.ravel() + L), freq)) * wgt
    nyq = np.abs(k) == m // 2
    e1c = e1.copy()
    e1c[:, nyq] = np.cos(np.outer(x1.ravel() + L, freq[nyq]))
    e2c = e2.copy()
    e2c[:, nyq] = np.cos(np.outer(x2.ravel() + L, freq[nyq]))
    out = np.einsum("pi,ijab,pj->pab", e1c, coef, e2c)
    return out.reshape(x1.shape + field_.values.shape[2:])


def _compact_bump(t):
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside]))
    return out


def sine_basis(n, z, a, b):
    """Dirichlet eigenfunctions of -d^2/dz^2 on [a, b] and their eigenvalues."""
    j = np.arange(1, n + 1)
    length = b - a
    phi = np.sqrt(2.0 / length) * np.sin(np.outer(z - a, j) * np.pi / length)
    return phi, (j * np.pi / length) ** 2


def reduce_3d_to_2d(v, n, interval, half_width=1.5, support_radius=None, domain_radius=None):
    """Project a 3D potential v(x, z) onto the first n transverse modes.

    ``v`` has shape ``(N, N, N_z)`` with z-nodes spanning ``interval``
    uniformly, endpoints included; the z-integral is the trapezoid rule. The
    result is ``V_ij = lambda_i delta_ij + int phi_i v phi_j dz``. When
    ``domain_radius`` is given, V is set to zero outside that disk.
    """
    v = np.asarray(v)
    a, b = interval
    nz = v.shape[2]
    if n > nz // 4:
        raise DomainError(f"n={n} too large for {nz} z-nodes (need n <= N_z/4)")
    z = np.linspace(a, b, nz)
    phi, lam = sine_basis(n, z, a, b)
    w = np.full(nz, (b - a) / (nz - 1))
    w[0] = w[-1] = 0.5 * w[0]
    # phi is real, so conjugating phi_i is a no-op
    vals = np.einsum("zi,xyz,zj->xyij", phi * w[:, None], v, phi).astype(complex)
    vals += np.diag(lam)
    size = v.shape[0]
    if domain_radius is not None:
        h = 2 * half_width / size
        x = -half_width + h * np.arange(size)
        x1, x2 = np.meshgrid(x, x, indexing="ij")
        vals *= (x1**2 + x2**2 <= domain_radius**2)[..., None, None]
    rho = half_width if support_radius is None else support_radius
    if domain_radius is not None:
        rho = min(rho, domain_radius)
    return MatrixField(vals, half_width, rho, dict(kind="reduced_3d", n=n, interval=[a, b]))


def fourier_transform(field_, pad=1):
    """V^(p) = (2 pi)^-2 int e^{ipx} V(x) dx by the trapezoid rule.

    ``pad`` zero-pads the spatial box to refine the frequency lattice; its
    step is 2 pi / (pad * 2L).
    """
    vals = field_.values
    nx = field_.size
    m = nx * pad
    h = field_.step
    buf = np.zeros((m, m) + vals.shape[2:], dtype=complex)
    buf[:nx, :nx] = vals
    # sum_x e^{i p x} V(x): ifft carries the positive exponent
    spec = np.fft.ifft2(buf, axes=(0, 1)) * m * m
    step = 2 * np.pi / (m * h)
    k = np.fft.fftfreq(m, 1.0 / m)
    p = step * k
    x0 = -field_.half_width
    phase = np.exp(1j * x0 * (p[:, None] + p[None, :]))
    spec = spec * phase[..., None, None] * h * h / (2 * np.pi) ** 2
    spec = np.fft.fftshift(spec, axes=(0, 1))
    return FrequencyField(spec, step)


def norm_alpha_s(vhat, spec):
    """Discrete estimate of the weighted Hoelder norm ||V^||_{alpha, s}.

    The weight (1 + |p|^2)^{s/2} is applied first; the Hoelder quotient of
    the weighted field uses every lattice offset of one step (axis and
    diagonal) whose length does not exceed 1.
    """
    vals = vhat.values
    if vals.size == 0:
        raise DomainError("empty frequency field")
    step = vhat.step
    if step > 1.0:
        raise DomainError(f"frequency step {step:.3g} > 1; refine with fourier_transform(pad=...)")
    p = vhat.axis
    weight = (1 + p[:, None] ** 2 + p[None, :] ** 2) ** (spec.s / 2)
    wv = vals * (weight if vals.ndim == 2 else weight[..., None, None])
    mod = _entry_max(wv)
    best = mod.copy()
    for d1, d2 in ((1, 0), (0, 1), (1, 1), (1, -1)):
        length = step * np.hypot(d1, d2)
        if length > 1.0:
            continue
        shifted = np.roll(wv, shift=(-d1, -d2), axis=(0, 1))
        diff = _entry_max(shifted - wv) / length ** spec.alpha
        valid = np.ones(mod.shape, dtype=bool)
        if d1 > 0:
            valid[-d1:, :] = False
        if d2 > 0:
            valid[:, -d2:] = False
        if d2 < 0:
            valid[:, :(-d2)] = False
        # forward and backward offsets share the same quotient
        best = np.maximum(best, np.where(valid, mod + diff, 0.0))
        back = np.roll(np.where(valid, diff, 0.0), shift=(d1, d2), axis=(0, 1))
        best = np.maximum(best, mod + back)
    return float(best.max())


def _entry_max(a):
    return np.abs(a) if a.ndim == 2 else np.abs(a).max(axis=(-2, -1))
