"""Free resolvent kernels, limiting absorption, and the evolution/resolvent link.

Convention: ``R0(lam) = (H0 - lam)^{-1}``.  Every component of the kernel is
``+-exp(-kappa r) / (4 pi r)`` with ``kappa`` the root of ``kappa^2 = w`` with
``Re kappa >= 0`` (the decaying root):

* scalar ``H0 = -Laplacian``: ``w = -lam``;
* matrix ``H0 = diag(Laplacian - mu, -Laplacian + mu)``: component 1 is
  ``-exp(-sqrt(mu + lam) r)/(4 pi r)``, component 2 is ``+exp(-sqrt(mu - lam) r)/(4 pi r)``.

Writing ``lam - mu = z^2`` with ``Im z > 0`` puts the component-2 entry in the
form ``exp(i z r)/(4 pi r)``; for the scalar case ``lam = z^2``.  On the
continuous spectrum the two boundary values are obtained from the sign of the
vanishing imaginary part of ``w``: ``R0(lam - i0)`` has kernel
``exp(-i sqrt(lam) r)/(4 pi r)`` and ``R0(lam + i0)`` has ``exp(+i sqrt(lam) r)/(4 pi r)``
(scalar case).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import BOUNDARY_FLAG_THRESHOLD, GridFunction, boundary_mass
from .lorentz import lorentz_norm, modulus_lorentz_norm
from .propagator import HamiltonianSpec, symbol

# Cell average of 1/(4 pi |r|) over the unit cube [-1/2, 1/2]^3:
# (3 ln(2 + sqrt 3) - pi/2) / (4 pi).  For a cell of side h, the integral of
# 1/(4 pi |r|) over the cell is SINGULAR_CELL_CONSTANT * h^2.
SINGULAR_CELL_CONSTANT = (3.0 * math.log(2.0 + math.sqrt(3.0)) - 0.5 * math.pi) / (4.0 * math.pi)

BRANCHES = ("off-axis", "-i0", "+i0")


def singular_cell_constant_mc(samples: int = 10**6, seed: int = 12345) -> tuple[float, float]:
    """Monte Carlo estimate (value, standard error) of the unit-cube cell integral."""
    rng = np.random.default_rng(seed)
    pts = rng.random((samples, 3)) - 0.5
    vals = 1.0 / (4.0 * math.pi * np.linalg.norm(pts, axis=1))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


@dataclass(frozen=True)
class ResolventQuery:
    lam: complex
    branch: str = "off-axis"
    eta: float = 1e-3

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}, got {self.branch!r}")
        object.__setattr__(self, "lam", complex(self.lam))
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def validate(self, h: HamiltonianSpec):
        lam = self.lam
        in_spectrum = lam.imag == 0 and (lam.real >= 0 if h.kind == "scalar" else abs(lam.real) >= h.mu)
        if self.branch == "off-axis" and in_spectrum:
            raise ValueError(f"lambda = {lam} lies on the continuous spectrum; choose the -i0 or +i0 branch")
        if self.branch != "off-axis" and not in_spectrum:
            raise ValueError(f"branch limits need lambda on the continuous spectrum, got {lam}")


def _sqrt_with_side(w: complex, side: float) -> complex:
    """Principal root of w, resolving w on the negative axis by the sign ``side``
    of an infinitesimal imaginary part."""
    w = complex(w)
    if w.imag == 0 and w.real < 0:
        return complex(0.0, math.copysign(math.sqrt(-w.real), side))
    return complex(np.sqrt(w))


def kappas(q: ResolventQuery, h: HamiltonianSpec) -> tuple[list[complex], list[float]]:
    """Decay rates kappa and kernel signs per component."""
    q.validate(h)
    lam = q.lam
    # sign of -Im(lam) for the branch: lam - i0 gives -1 * (-1) ...
    s = {"off-axis": 0.0, "-i0": -1.0, "+i0": 1.0}[q.branch]  # Im(lam) -> s * 0
    if h.kind == "scalar":
        return [_sqrt_with_side(-lam, -s)], [1.0]
    return [_sqrt_with_side(h.mu + lam, s), _sqrt_with_side(h.mu - lam, -s)], [-1.0, 1.0]


def free_resolvent_kernel(x_minus_y, q: ResolventQuery, h: HamiltonianSpec) -> np.ndarray:
    """Kernel of R0(lam) at displacement(s) x - y: 1x1 or 2x2 (diagonal) matrices."""
    d = np.asarray(x_minus_y, dtype=float)
    r = np.linalg.norm(d, axis=-1)
    if np.any(r == 0):
        raise ValueError("kernel is singular at zero displacement")
    ks, signs = kappas(q, h)
    c = len(ks)
    out = np.zeros(r.shape + (c, c), dtype=np.complex128)
    for i, (k, s) in enumerate(zip(ks, signs)):
        out[..., i, i] = s * np.exp(-k * r) / (4 * math.pi * r)
    return out


def truncated_kernel_transform(xi: np.ndarray, kappa: complex, cutoff: float) -> np.ndarray:
    """Fourier transform of exp(-kappa r)/(4 pi r) restricted to r < cutoff:
    (1/xi) int_0^cutoff sin(xi r) exp(-kappa r) dr."""
    xi = np.asarray(xi, dtype=float)
    k = complex(kappa)
    R = cutoff
    den = xi * xi + k * k
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = np.where(xi > 0, np.sin(xi * R) / np.where(xi > 0, xi, 1.0), R)
        num = 1.0 - np.exp(-k * R) * (np.cos(xi * R) + k * sinc)
        out = num / den
    bad = np.abs(den) < 1e-6 * (xi * xi + abs(k) ** 2)
    if np.any(bad):
        # near the shell xi^2 = -kappa^2 the closed form cancels; integrate directly
        x, w = np.polynomial.legendre.leggauss(400)
        rr = 0.5 * R * (x + 1)
        ww = 0.5 * R * w
        xb = xi[bad]
        vals = (np.sin(np.outer(xb, rr)) * np.exp(-k * rr)) @ ww
        xs = np.where(xb > 0, xb, 1.0)
        out[bad] = np.where(xb > 0, vals / xs, (rr * np.exp(-k * rr)) @ ww)
    return out


def resolvent_multiplier(grid, q: ResolventQuery, h: HamiltonianSpec, cutoff: float | None = None) -> np.ndarray:
    """Fourier multiplier (c, n, n, n) of the kernel truncated at ``cutoff`` (default L/2)."""
    R = grid.L / 2 if cutoff is None else cutoff
    xi = np.sqrt(grid.xi_squared)
    ks, signs = kappas(q, h)
    return np.stack([s * truncated_kernel_transform(xi, k, R) for k, s in zip(ks, signs)])


def lattice_zeta_half(terms: int = 6) -> float:
    """Analytically continued lattice sum sum'_{n in Z^3} |n|^{-1}, by Ewald splitting."""
    from scipy.special import erfc

    r = np.arange(-terms, terms + 1)
    n = np.sqrt(r[:, None, None] ** 2 + r[None, :, None] ** 2 + r[None, None, :] ** 2).ravel()
    n = n[n > 0]
    return float(-3.0 + np.sum(erfc(math.sqrt(math.pi) * n) / n + np.exp(-math.pi * n * n) / (math.pi * n * n)))


# Diagonal weight that makes the punctured trapezoid rule for 1/(4 pi r) exact
# up to terms of higher order in h: -zeta_{Z^3}(1/2) / (4 pi) per unit spacing.
LATTICE_DIAGONAL_CONSTANT = -lattice_zeta_half() / (4.0 * math.pi)


def diagonal_value(kappa: complex, sign: float, hstep: float, rule: str = "lattice") -> complex:
    """Kernel value assigned to the r = 0 sample on a grid of spacing h.

    ``rule="lattice"`` uses the corrected-trapezoid weight for the 1/r part,
    ``rule="cell"`` the cell average of 1/(4 pi r); both add the regular
    first-order term -kappa/(4 pi).
    """
    const = {"lattice": LATTICE_DIAGONAL_CONSTANT, "cell": SINGULAR_CELL_CONSTANT}[rule]
    return sign * (const / hstep - kappa / (4 * math.pi))


def sampled_kernel(grid, q: ResolventQuery, h: HamiltonianSpec, cutoff: float | None = None,
                   rule: str = "lattice") -> np.ndarray:
    """Kernel sampled on the periodic displacement grid, zero beyond the cutoff,
    with the regularized value at r = 0; shape (c, n, n, n)."""
    R = grid.L / 2 if cutoff is None else cutoff
    idx = np.fft.fftfreq(grid.n, d=1.0 / grid.n) * grid.h  # minimal-image displacements
    r = np.sqrt(idx[:, None, None] ** 2 + idx[None, :, None] ** 2 + idx[None, None, :] ** 2)
    ks, signs = kappas(q, h)
    out = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for k, s in zip(ks, signs):
            kern = np.where((r > 0) & (r < R), s * np.exp(-k * r) / (4 * math.pi * r), 0.0).astype(np.complex128)
            kern[0, 0, 0] = diagonal_value(k, s, grid.h, rule)
            out.append(kern)
    return np.stack(out)


def apply_free_resolvent(f: GridFunction, q: ResolventQuery, h: HamiltonianSpec, method: str = "spectral",
                         cutoff: float | None = None, rule: str = "lattice") -> GridFunction:
    """R0(lam) f as a convolution with the kernel truncated at radius ``cutoff``.

    ``method="spectral"`` multiplies by the exact transform of the truncated
    kernel; ``method="direct"`` convolves (by FFT) with the kernel sampled on
    the grid, using the regularized diagonal value of ``rule``.
    """
    if f.components != h.components:
        raise ValueError("component mismatch")
    fh = np.fft.fftn(f.values, axes=(1, 2, 3))
    if method == "spectral":
        mult = resolvent_multiplier(f.grid, q, h, cutoff)
    elif method == "direct":
        mult = np.fft.fftn(sampled_kernel(f.grid, q, h, cutoff, rule), axes=(1, 2, 3)) * f.grid.cell_volume
    else:
        raise ValueError(f"unknown method {method!r}")
    return GridFunction(f.grid, np.fft.ifftn(fh * mult, axes=(1, 2, 3)))


def richardson_branch_limit(f: GridFunction, lam: float, branch: str, h: HamiltonianSpec,
                            etas=(1e-3, 1e-4), method: str = "spectral") -> GridFunction:
    """R0(lam -+ i0) f by evaluation at lam -+ i eta for two eta values and
    linear Richardson extrapolation to eta = 0 (a cross-check of the exact limit)."""
    s = -1.0 if branch == "-i0" else 1.0
    e1, e2 = etas
    r1 = apply_free_resolvent(f, ResolventQuery(lam + 1j * s * e1), h, method)
    r2 = apply_free_resolvent(f, ResolventQuery(lam + 1j * s * e2), h, method)
    return GridFunction(f.grid, (e1 * r2.values - e2 * r1.values) / (e1 - e2))


@dataclass(frozen=True, eq=False)
class FourierLimitResult:
    lhs: GridFunction
    rhs: GridFunction
    discrepancy: float
    scale: float
    flagged: bool
    two_sided_discrepancy: float | None = None


def _time_integral(f: GridFunction, lam: complex, t0: float, t1: float, dt: float, h: HamiltonianSpec) -> np.ndarray:
    """Trapezoid quadrature (in Fourier space) of int_t0^t1 exp(-i t lam) exp(i t H0) f dt."""
    steps = int(round((t1 - t0) / dt))
    fh = np.fft.fftn(f.values, axes=(1, 2, 3), norm="ortho")
    sym = symbol(f.grid, h)
    step = np.exp(1j * dt * (sym - lam))
    cur = fh * np.exp(1j * t0 * (sym - lam))
    acc = 0.5 * cur
    for _ in range(steps - 1):
        cur = cur * step
        acc += cur
    acc += 0.5 * (cur * step)
    return np.fft.ifftn(acc * dt, axes=(1, 2, 3), norm="ortho")


def fourier_limit_check(f: GridFunction, lam: complex, rho: float, h: HamiltonianSpec,
                        dt: float = 1.0 / 128.0, method: str = "spectral") -> FourierLimitResult:
    """Compare int_0^rho exp(-i t lam) exp(i t H0) f dt with i R0(lam - i0) f.

    The discrepancy is the L^{6,inf} norm of the difference; ``scale`` is
    ||f||_{L^{6/5,1}}.  The wraparound flag uses the boundary mass of the
    integrand at the horizon weighted by its damping |exp(-i rho lam)|^2.
    For real lam the two-sided integral over [-rho, rho] is also compared
    with i (R0(lam - i0) - R0(lam + i0)) f.
    """
    lam = complex(lam)
    if lam.imag > 0:
        raise ValueError("the one-sided integral needs Im lam <= 0")
    lhs = GridFunction(f.grid, _time_integral(f, lam, 0.0, rho, dt, h))
    if lam.imag < 0:
        q = ResolventQuery(lam)
    else:
        q = ResolventQuery(lam, "-i0")
    rhs = apply_free_resolvent(f, q, h, method) * 1j
    diff = lhs - rhs
    disc = modulus_lorentz_norm(diff.modulus(), f.grid.cell_volume, 6.0, math.inf)
    scale = lorentz_norm(f, 1.2, 1.0)
    end = GridFunction(f.grid, np.fft.ifftn(np.fft.fftn(f.values, axes=(1, 2, 3)) *
                                            np.exp(1j * rho * symbol(f.grid, h)), axes=(1, 2, 3)))
    flagged = boundary_mass(end) * math.exp(2 * rho * lam.imag) > BOUNDARY_FLAG_THRESHOLD
    two_sided = None
    if lam.imag == 0:
        both = _time_integral(f, lam, -rho, rho, dt, h)
        jump = (apply_free_resolvent(f, ResolventQuery(lam, "-i0"), h, method).values
                - apply_free_resolvent(f, ResolventQuery(lam, "+i0"), h, method).values)
        two_sided = modulus_lorentz_norm(GridFunction(f.grid, both - 1j * jump).modulus(),
                                         f.grid.cell_volume, 6.0, math.inf)
    return FourierLimitResult(lhs, rhs, disc, scale, flagged, two_sided)
