"""Matrix-valued convolution kernels on a cyclic time group.

A :class:`TimeKernel` is the measure ``E delta_0 + sum_k L_k delta_{t_k}`` on
``Z_m`` with slot spacing ``tau`` (``t_k = k tau``).  The point mass ``E`` at
the origin is carried separately from the slots, so "identity plus kernel"
is represented faithfully.  Convolution, symbols and inversion are exact
finite linear algebra on ``Z_m``; causality is asserted on the first half
of the slots, with the second half acting as a guard band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class SingularSymbol(ArithmeticError):
    """The symbol fails to be invertible at a sampled frequency."""

    def __init__(self, index: int, frequency: float, condition: float):
        super().__init__(f"symbol is singular at frequency index {index} (lambda = {frequency:.6g}, condition {condition:.3g})")
        self.index = index
        self.frequency = frequency
        self.condition = condition


class CoverTooCoarse(ArithmeticError):
    pass


class GuardBandViolation(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class TimeKernel:
    """``blocks`` has shape (m, d, d); ``identity`` is the d x d point mass at t = 0."""

    blocks: np.ndarray
    tau: float
    identity: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=np.complex128)
        if b.ndim != 3 or b.shape[1] != b.shape[2] or b.shape[0] < 1:
            raise ValueError(f"blocks must have shape (m, d, d), got {b.shape}")
        if not np.all(np.isfinite(b)):
            raise ValueError("kernel has non-finite entries")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        d = b.shape[1]
        e = np.zeros((d, d), dtype=np.complex128) if self.identity is None else np.asarray(self.identity, dtype=np.complex128)
        if e.ndim == 0:
            e = e * np.eye(d)
        if e.shape != (d, d):
            raise ValueError("identity part must be d x d")
        b.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "blocks", b)
        object.__setattr__(self, "identity", e)

    @property
    def m(self) -> int:
        return self.blocks.shape[0]

    @property
    def d(self) -> int:
        return self.blocks.shape[1]

    @property
    def has_identity(self) -> bool:
        return bool(np.any(self.identity != 0))

    @classmethod
    def zeros(cls, m: int, d: int, tau: float) -> "TimeKernel":
        return cls(np.zeros((m, d, d)), tau)

    @classmethod
    def eye(cls, m: int, d: int, tau: float) -> "TimeKernel":
        return cls(np.zeros((m, d, d)), tau, np.eye(d))

    @classmethod
    def delta(cls, m: int, d: int, tau: float, slot: int, value=None) -> "TimeKernel":
        """Unit point mass (mass one) at a slot: block value / tau."""
        b = np.zeros((m, d, d), dtype=np.complex128)
        b[slot % m] = (np.eye(d) if value is None else np.asarray(value)) / tau
        return cls(b, tau)

    def mass_norm(self) -> float:
        """Total variation: ||E|| + sum_k ||L_k||_op tau."""
        ops = np.linalg.norm(self.blocks, ord=2, axis=(1, 2))
        return float(np.linalg.norm(self.identity, 2) + ops.sum() * self.tau)

    def adjoint(self) -> "TimeKernel":
        idx = (-np.arange(self.m)) % self.m
        return TimeKernel(np.conj(np.transpose(self.blocks[idx], (0, 2, 1))), self.tau, self.identity.conj().T)

    def modulate(self, f) -> "TimeKernel":
        """Multiply the measure by a scalar sequence f_k (f_0 also scales the point mass)."""
        f = np.asarray(f)
        if f.shape != (self.m,):
            raise ValueError("modulating sequence must have one value per slot")
        return TimeKernel(self.blocks * f[:, None, None], self.tau, self.identity * f[0])

    def __add__(self, other: "TimeKernel") -> "TimeKernel":
        _match(self, other)
        return TimeKernel(self.blocks + other.blocks, self.tau, self.identity + other.identity)

    def __sub__(self, other: "TimeKernel") -> "TimeKernel":
        _match(self, other)
        return TimeKernel(self.blocks - other.blocks, self.tau, self.identity - other.identity)

    def scaled(self, c) -> "TimeKernel":
        return TimeKernel(self.blocks * c, self.tau, self.identity * c)

    def max_block_difference(self, other: "TimeKernel") -> float:
        _match(self, other)
        return float(max(np.max(np.abs(self.blocks - other.blocks)), np.max(np.abs(self.identity - other.identity))))


def _match(a: TimeKernel, b: TimeKernel):
    if a.m != b.m or a.d != b.d or a.tau != b.tau:
        raise ValueError(f"kernel shapes differ: (m={a.m}, d={a.d}, tau={a.tau}) vs (m={b.m}, d={b.d}, tau={b.tau})")


def convolve(a: TimeKernel, b: TimeKernel) -> TimeKernel:
    """(E_a + L_a) * (E_b + L_b), with the slot part of L_a * L_b scaled by tau."""
    _match(a, b)
    m = a.m
    out = np.einsum("ij,kjl->kil", a.identity, b.blocks) + np.einsum("kij,jl->kil", a.blocks, b.identity)
    for j in np.nonzero(np.any(a.blocks != 0, axis=(1, 2)))[0]:
        out = out + a.tau * np.einsum("ij,kjl->kil", a.blocks[j], np.roll(b.blocks, j, axis=0))
    return TimeKernel(out, a.tau, a.identity @ b.identity)


@dataclass(frozen=True, eq=False)
class SymbolFamily:
    frequencies: np.ndarray
    values: np.ndarray


def frequencies(m: int, tau: float) -> np.ndarray:
    return 2 * np.pi * np.arange(m) / (m * tau)


def symbol(a: TimeKernel) -> SymbolFamily:
    """A(lam_j) = E + sum_k exp(-i tau k lam_j) L_k tau at lam_j = 2 pi j / (m tau)."""
    vals = a.identity[None] + np.fft.fft(a.blocks, axis=0) * a.tau
    return SymbolFamily(frequencies(a.m, a.tau), vals)


def symbol_at(a: TimeKernel, lam) -> np.ndarray:
    """Symbol at arbitrary (complex) lam, treating slot k as time k tau."""
    lam = np.atleast_1d(np.asarray(lam, dtype=np.complex128))
    k = np.arange(a.m)
    ph = np.exp(-1j * a.tau * np.outer(lam, k))
    return a.identity[None] + np.einsum("lk,kij->lij", ph, a.blocks) * a.tau


def from_symbol(values: np.ndarray, tau: float, identity=None) -> TimeKernel:
    """Kernel whose slot part has the given symbol (after removing ``identity``)."""
    values = np.asarray(values, dtype=np.complex128)
    d = values.shape[1]
    E = np.zeros((d, d)) if identity is None else np.asarray(identity, dtype=np.complex128)
    return TimeKernel(np.fft.ifft(values - E[None], axis=0) / tau, tau, E)


def invert(a: TimeKernel, cond_limit: float = 1e10) -> TimeKernel:
    """Inverse of an identity-carrying kernel by pointwise symbol inversion."""
    if not a.has_identity:
        raise ValueError("only kernels of the form identity + L are invertible in this model")
    sym = symbol(a)
    cond = np.linalg.cond(sym.values)
    bad = np.nonzero(~(cond < cond_limit))[0]
    if len(bad):
        j = int(bad[0])
        raise SingularSymbol(j, float(sym.frequencies[j]), float(cond[j]))
    inv = np.linalg.inv(sym.values)
    return from_symbol(inv, a.tau, np.linalg.inv(a.identity))


def block_circulant(a: TimeKernel) -> np.ndarray:
    """Dense (m d) x (m d) matrix of convolution with a acting on slot sequences."""
    m, d = a.m, a.d
    M = np.zeros((m, d, m, d), dtype=np.complex128)
    for k in range(m):
        for j in range(m):
            M[k, :, j, :] = a.blocks[(k - j) % m] * a.tau
        M[k, :, k, :] += a.identity
    return M.reshape(m * d, m * d)


# ----------------------------------------------------------------------------
# localization


def bump(x) -> np.ndarray:
    """Standard smooth bump exp(-1/(1 - x^2)) on (-1, 1), zero outside."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def smooth_step(x) -> np.ndarray:
    """0 for x <= 0, 1 for x >= 1, smooth in between (ratio of bump tails)."""
    x = np.asarray(x, dtype=float)

    def phi(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    return phi(x) / (phi(x) + phi(1.0 - x))


def _arc_distance(lam, centre, period):
    return np.abs((lam - centre + period / 2) % period - period / 2)


@dataclass(frozen=True, eq=False)
class LocalizationPieces:
    centres: np.ndarray
    chi: np.ndarray
    chi_wide: np.ndarray
    contraction: np.ndarray
    neumann_terms: list


def _scalar_kernel(values: np.ndarray, a: TimeKernel) -> TimeKernel:
    """Kernel (no point mass) with scalar symbol ``values`` times the d x d identity."""
    blocks = np.fft.ifft(values)[:, None, None] * np.eye(a.d)[None] / a.tau
    return TimeKernel(blocks, a.tau)


def invert_by_localization(a: TimeKernel, cover_count: int, overlap: float = 0.5, tol: float = 1e-15,
                           max_terms: int = 2000, return_pieces: bool = False):
    """Inverse assembled from local inverses on a cover of the frequency circle.

    The circle [0, 2 pi / tau) is cut into ``cover_count`` equal arcs.  Each
    arc j carries a partition function chi_j (normalized smooth bumps) and a
    wider cutoff chi~_j equal to one on the support of chi_j.  The local
    kernel A_j = A(lam_j) delta_0 + chi~_j * (A - A(lam_j) delta_0) agrees
    with A where chi_j lives and is inverted by the Neumann series of
    A(lam_j)^{-1} chi~_j * (A - A(lam_j) delta_0), summed in the time domain
    with :func:`convolve`.  The inverse is sum_j chi_j * A_j^{-1}; on the
    cyclic group the partition covers the whole circle, so the remainder
    (I - sum chi_j) * A_inf^{-1} vanishes and is kept only as a check.
    """
    if not a.has_identity:
        raise ValueError("only kernels of the form identity + L are invertible in this model")
    if cover_count < 1:
        raise ValueError("cover_count must be positive")
    m, tau = a.m, a.tau
    period = 2 * math.pi / tau
    lam = frequencies(m, tau)
    width = period / cover_count
    centres_c = (np.arange(cover_count) + 0.5) * width
    half = 0.5 * width
    dist = np.stack([_arc_distance(lam, c, period) for c in centres_c])
    psi = bump(dist / (half * (1 + overlap)))
    total = psi.sum(axis=0)
    if np.any(total == 0):
        raise CoverTooCoarse("partition of unity does not cover every frequency; increase overlap")
    chi = psi / total
    inner, outer = half * (1 + overlap), half * (1 + 2 * overlap)
    chi_wide = 1.0 - smooth_step((dist - inner) / (outer - inner))
    sym = symbol(a).values
    result = TimeKernel.zeros(m, a.d, tau)
    contraction = np.zeros(cover_count)
    terms = []
    remainder = 1.0 - chi.sum(axis=0)
    for j in range(cover_count):
        if not np.any(chi[j] > 0):
            terms.append(0)
            continue
        # frequency sample nearest the arc centre, restricted to the arc's support
        on = np.nonzero(chi[j] > 0)[0]
        jc = on[np.argmin(dist[j, on])]
        A0 = sym[jc]
        try:
            A0inv = np.linalg.inv(A0)
        except np.linalg.LinAlgError as exc:
            raise SingularSymbol(int(jc), float(lam[jc]), math.inf) from exc
        # D = A0^{-1} chi~_j * (A - A0 delta_0), a kernel without point mass
        diff = TimeKernel(a.blocks, tau, a.identity - A0)
        chi_k = _scalar_kernel(chi_wide[j], a)
        D = convolve(TimeKernel(np.zeros_like(a.blocks), tau, A0inv), convolve(chi_k, diff))
        dsym = symbol(D).values
        rho = float(np.max(np.abs(np.linalg.eigvals(dsym))))
        norm_sup = float(np.max(np.linalg.norm(dsym, 2, axis=(1, 2))))
        contraction[j] = norm_sup
        if not rho < 1:
            raise CoverTooCoarse(
                f"local piece {j} is not invertible by a Neumann series (spectral radius {rho:.3g}); use a finer cover")
        # (I + D)^{-1} = sum_n (-D)^n, then A_j^{-1} = (I + D)^{-1} A0^{-1}
        acc = TimeKernel.eye(m, a.d, tau)
        term = TimeKernel.eye(m, a.d, tau)
        n = 0
        while n < max_terms:
            term = convolve(term, D).scaled(-1.0)
            acc = acc + term
            n += 1
            if term.mass_norm() < tol * acc.mass_norm():
                break
        else:
            raise CoverTooCoarse(f"Neumann series for piece {j} did not converge in {max_terms} terms")
        terms.append(n)
        local_inv = convolve(acc, TimeKernel(np.zeros_like(a.blocks), tau, A0inv))
        result = result + convolve(_scalar_kernel(chi[j], a), local_inv)
    if np.max(np.abs(remainder)) > 1e-14:
        # contribution of the neighbourhood of infinity: A_inf = I on the cyclic model
        result = result + _scalar_kernel(remainder, a)
    # the glued sum holds the inverse's point mass as E / tau in slot 0; carry it separately again
    E = np.linalg.inv(a.identity)
    result = TimeKernel(result.blocks - _point_mass_slots(E, a), tau, E)
    if return_pieces:
        return result, LocalizationPieces(centres_c, chi, chi_wide, contraction, terms)
    return result


def _point_mass_slots(E: np.ndarray, a: TimeKernel) -> np.ndarray:
    """Slot representation of the point mass E delta_0 (E / tau at slot 0)."""
    b = np.zeros_like(a.blocks)
    b[0] = E / a.tau
    return b


# ----------------------------------------------------------------------------
# causality


@dataclass(frozen=True)
class CausalityReport:
    is_causal: bool
    inverse_causal: bool
    lower_half_plane_min: float
    offending: complex | None
    anticausal_mass: float
    inverse_anticausal_mass: float


def _outside_mass(a: TimeKernel, window: int) -> float:
    return float(np.max(np.abs(a.blocks[window:]))) * a.tau if window < a.m else 0.0


def causality_check(a: TimeKernel, window: int | None = None, im_range=(-2.0, 0.0), im_points: int = 41,
                    tol: float = 1e-12, guard: float = 1e-9, vanish: float = 1e-8) -> CausalityReport:
    """Causality of a and of its inverse on the guard-band model of the line.

    Slots 0 .. window-1 count as t >= 0 (default window = m / 2).  The symbol
    of a causal kernel extends to the lower half-plane; it is sampled on the
    frequencies times a grid of Im lam in ``im_range``.  If it is bounded and
    invertible there the inverse must be causal, and anticausal mass in the
    inverse above ``guard`` means the guard band is too short.  A vanishing
    symbol is reported with the offending lam.
    """
    m = a.m
    window = m // 2 if window is None else int(window)
    if not 0 < window <= m:
        raise ValueError("window must be between 1 and m slots")
    out_a = _outside_mass(a, window)
    is_causal = out_a <= tol
    inv = invert(a)
    out_inv = _outside_mass(inv, window)
    offending = None
    lhp_min = math.nan
    if is_causal:
        lam = frequencies(m, a.tau)
        ims = np.linspace(im_range[0], im_range[1], im_points)
        grid = (lam[:, None] + 1j * ims[None, :]).ravel()
        # evaluate on the causal half: slot k means time k tau with 0 <= k < window
        trunc = TimeKernel(np.concatenate([a.blocks[:window], np.zeros_like(a.blocks[window:])]), a.tau, a.identity)
        vals = symbol_at(trunc, grid)
        smin = np.linalg.svd(vals, compute_uv=False)[:, -1]
        scale = 1.0 + np.linalg.norm(vals, 2, axis=(1, 2))
        i = int(np.argmin(smin / scale))
        lhp_min = float(smin[i])
        if smin[i] < vanish * scale[i]:
            offending = complex(grid[i])
            inverse_causal = False
        else:
            if out_inv > guard:
                raise GuardBandViolation(
                    f"inverse of a causal kernel with invertible symbol has anticausal mass {out_inv:.3g} > {guard:g}; "
                    "lengthen the guard band (more slots)")
            inverse_causal = out_inv <= tol
    else:
        inverse_causal = out_inv <= tol
    return CausalityReport(bool(is_causal), bool(inverse_causal), lhp_min, offending, out_a, out_inv)


def neumann_inverse(a: TimeKernel, tol: float = 1e-16, max_terms: int = 10000) -> TimeKernel:
    """(I + L)^{-1} = sum_n (-L)^n in the time domain, for identity point mass I."""
    if not np.allclose(a.identity, np.eye(a.d), atol=0, rtol=0):
        raise ValueError("Neumann series needs point mass exactly I")
    L = TimeKernel(a.blocks, a.tau)
    acc = TimeKernel.eye(a.m, a.d, a.tau)
    term = TimeKernel.eye(a.m, a.d, a.tau)
    for _ in range(max_terms):
        term = convolve(term, L).scaled(-1.0)
        acc = acc + term
        if term.mass_norm() < tol:
            return acc
    raise ArithmeticError("Neumann series did not converge")
