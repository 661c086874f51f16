"""Birman-Schwinger reduction of a potential to its support points.

A potential V supported on ``s`` nodes is factored pointwise as V = V1 V2.
The perturbed operator H = H0 + V is represented by point interactions at
the nodes: writing ``G(z)`` for the matrix of free resolvent kernel values
between nodes (with the regularized diagonal of :mod:`artifact.resolvent`)
and ``w = h^3`` for the node weight,

    T(z) = I + V2 w G(z) V1,
    R_V(z) = R0(z) - R0(z) E V1 T(z)^{-1} V2 w E# R0(z),

where ``E`` places point sources at the nodes and ``E#`` samples at them.
Every operator built from this formula has the form
``sum_ij R0(a_i) E N_ij E# R0(b_j)``; such operators are composed and normed
exactly through divided differences of ``G`` (see :class:`KreinOperator`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .grid import Scenario
from .propagator import HamiltonianSpec
from .resolvent import LATTICE_DIAGONAL_CONSTANT, SINGULAR_CELL_CONSTANT, ResolventQuery

DIP_THRESHOLD = 0.05
BRANCH_EXCLUSION = 1e-3
SIGMA3 = np.diag([1.0, -1.0])
SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]])


class FactorizationError(ValueError):
    pass


class IllConditioned(ArithmeticError):
    pass


# ----------------------------------------------------------------------------
# factorization


@dataclass(frozen=True, eq=False)
class PotentialFactors:
    """Pointwise factors V = V1 V2 on the support nodes.

    ``V``, ``V1`` and ``V2`` have shape (s, c, c); the dense block-diagonal
    (c s) x (c s) matrices (point-major ordering) are available through
    :meth:`block`.
    """

    hamiltonian: HamiltonianSpec
    hstep: float
    indices: np.ndarray
    nodes: np.ndarray
    V: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    rule: str = "cell"
    _dist: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        d = self.nodes[:, None, :] - self.nodes[None, :, :]
        object.__setattr__(self, "_dist", np.sqrt(np.sum(d * d, axis=-1)))

    @property
    def components(self) -> int:
        return self.hamiltonian.components

    @property
    def count(self) -> int:
        return len(self.indices)

    @property
    def size(self) -> int:
        return self.count * self.components

    @property
    def weight(self) -> float:
        return self.hstep**3

    @property
    def distances(self) -> np.ndarray:
        return self._dist

    def block(self, which: str) -> np.ndarray:
        arr = {"V": self.V, "V1": self.V1, "V2": self.V2}[which]
        return sla.block_diag(*arr) if self.count else np.zeros((0, 0), dtype=np.complex128)

    def reconstruction_error(self) -> float:
        if self.count == 0:
            return 0.0
        return float(np.max(np.abs(self.V1 @ self.V2 - self.V)))

    def replaced(self, V1: np.ndarray, V2: np.ndarray) -> "PotentialFactors":
        return PotentialFactors(self.hamiltonian, self.hstep, self.indices, self.nodes, self.V,
                                np.asarray(V1, dtype=np.complex128), np.asarray(V2, dtype=np.complex128),
                                self.rule)


def factor_values(values: np.ndarray, kind: str, style: str = "balanced") -> tuple[np.ndarray, np.ndarray]:
    """Pointwise factors (V1, V2) of potential values of shape (s, c, c).

    ``balanced``: scalar V1 = V/|V|^{1/2}, V2 = |V|^{1/2}; matrix V2 the PSD
    square root of sigma3 V and V1 = sigma3 V2.  ``left``: V1 = V, V2 = I.
    """
    values = np.asarray(values, dtype=np.complex128)
    s, c = values.shape[0], values.shape[1]
    if style == "left":
        return values.copy(), np.broadcast_to(np.eye(c, dtype=np.complex128), values.shape).copy()
    if style != "balanced":
        raise ValueError(f"unknown factorization style {style!r}")
    if kind == "scalar":
        v = values[:, 0, 0]
        r = np.sqrt(np.abs(v))
        with np.errstate(invalid="ignore", divide="ignore"):
            v1 = np.where(r > 0, v / np.where(r > 0, r, 1.0), 0.0)
        return v1[:, None, None].astype(np.complex128), r[:, None, None].astype(np.complex128)
    sv = SIGMA3 @ values
    herm_err = np.max(np.abs(sv - np.conj(np.transpose(sv, (0, 2, 1)))), axis=(1, 2)) if s else np.zeros(0)
    sv = 0.5 * (sv + np.conj(np.transpose(sv, (0, 2, 1))))
    ev, U = np.linalg.eigh(sv)
    scale = np.maximum(np.max(np.abs(ev), axis=1), 1e-300) if s else np.zeros(0)
    bad = np.nonzero((ev[:, 0] < -1e-12 * scale) | (herm_err > 1e-12 * scale))[0] if s else []
    if len(bad):
        raise FactorizationError(
            "sigma3 V is not positive semidefinite at support points " + ", ".join(str(int(i)) for i in bad[:20])
            + (" ..." if len(bad) > 20 else "")
        )
    root = np.einsum("sij,sj,skj->sik", U, np.sqrt(np.clip(ev, 0.0, None)), np.conj(U))
    return SIGMA3 @ root, root


def split_potential(scn: Scenario, style: str = "balanced", rule: str = "cell") -> PotentialFactors:
    """Factor the scenario's potential on its support nodes."""
    pot = scn.potential
    V1, V2 = factor_values(pot.values, scn.kind, style)
    return PotentialFactors(HamiltonianSpec.of(scn), scn.grid.h, np.asarray(pot.indices), np.asarray(pot.nodes, dtype=float),
                            np.asarray(pot.values, dtype=np.complex128), V1, V2, rule)


# ----------------------------------------------------------------------------
# node kernels


def _component_kappas(z: complex, h: HamiltonianSpec, side: float = 0.0) -> tuple[list[complex], list[float]]:
    """Decay rates per component at spectral parameter z.

    ``side`` resolves z on the continuous spectrum: -1 for z - i0, +1 for z + i0.
    """
    z = complex(z)

    def root(w, s):
        if w.imag == 0 and w.real < 0:
            if s == 0:
                raise ValueError(f"spectral parameter {z} lies on the continuous spectrum")
            return complex(0.0, math.copysign(math.sqrt(-w.real), s))
        return complex(np.sqrt(w))

    if h.kind == "scalar":
        return [root(-z, -side)], [1.0]
    return [root(h.mu + z, side), root(h.mu - z, -side)], [-1.0, 1.0]


def _query_side(q: ResolventQuery) -> float:
    return {"off-axis": 0.0, "-i0": -1.0, "+i0": 1.0}[q.branch]


@dataclass(frozen=True)
class Node:
    """A spectral parameter with the side of the cut it is evaluated on."""

    z: complex
    side: float = 0.0

    @classmethod
    def of(cls, q) -> "Node":
        if isinstance(q, Node):
            return q
        if isinstance(q, ResolventQuery):
            q_side = _query_side(q)
            return cls(complex(q.lam), q_side)
        return cls(complex(q), 0.0)

    def conj(self) -> "Node":
        return Node(self.z.conjugate(), -self.side)


def _diag_constant(rule: str) -> float:
    return {"lattice": LATTICE_DIAGONAL_CONSTANT, "cell": SINGULAR_CELL_CONSTANT}[rule]


def _assemble(pf: PotentialFactors, per_comp) -> np.ndarray:
    """(c s) x (c s) point-major matrix from per-component (s, s) blocks."""
    s, c = pf.count, pf.components
    out = np.zeros((s, c, s, c), dtype=np.complex128)
    for a, blk in enumerate(per_comp):
        out[:, a, :, a] = blk
    return out.reshape(s * c, s * c)


def node_kernel(pf: PotentialFactors, z, derivative: bool = False) -> np.ndarray:
    """Matrix G(z) of kernel values between nodes, or its z-derivative."""
    nd = Node.of(z)
    ks, signs = _component_kappas(nd.z, pf.hamiltonian, nd.side)
    r = pf.distances
    const = _diag_constant(pf.rule) / pf.hstep
    blocks = []
    off = ~np.eye(pf.count, dtype=bool)
    rs = np.where(off, r, 1.0)
    for k, s in zip(ks, signs):
        if derivative:
            # d/dz of sign*exp(-kappa r)/(4 pi r) is exp(-kappa r)/(8 pi kappa) in every component
            blk = np.exp(-k * r) / (8 * math.pi * k)
        else:
            blk = np.where(off, s * np.exp(-k * rs) / (4 * math.pi * rs), s * (const - k / (4 * math.pi)))
        blocks.append(blk)
    return _assemble(pf, blocks)


def divided_difference(pf: PotentialFactors, a, b) -> np.ndarray:
    """(G(a) - G(b)) / (a - b): the node kernel of R0(a) R0(b).

    The singular diagonal cancels, so this is the exact continuum kernel of
    the product sampled at the nodes.
    """
    na, nb = Node.of(a), Node.of(b)
    if na == nb:
        return node_kernel(pf, na, derivative=True)
    ka, sg = _component_kappas(na.z, pf.hamiltonian, na.side)
    kb, _ = _component_kappas(nb.z, pf.hamiltonian, nb.side)
    r = pf.distances
    dz = na.z - nb.z
    blocks = []
    for k1, k2, s in zip(ka, kb, sg):
        if dz == 0:
            raise ValueError("divided difference across the cut at a single point is undefined")
        # exp(-k1 r) - exp(-k2 r) over r, written stably for r -> 0 and k1 -> k2
        dk = k1 - k2
        with np.errstate(invalid="ignore", divide="ignore"):
            x = -dk * r
            ratio = np.where(np.abs(x) > 1e-8, np.expm1(x) / np.where(x != 0, x, 1.0), 1.0 + 0.5 * x)
        num = -dk * np.exp(-k2 * r) * ratio  # (exp(-k1 r) - exp(-k2 r)) / r
        blocks.append(s * num / (4 * math.pi * dz))
    return _assemble(pf, blocks)


def _weighted(pf: PotentialFactors, G: np.ndarray) -> np.ndarray:
    """V2 w G V1 for a node matrix G."""
    s, c = pf.count, pf.components
    Gr = G.reshape(s, c, s, c)
    out = np.einsum("iab,ibjc,jcd->iajd", pf.V2, Gr, pf.V1, optimize=True) * pf.weight
    return out.reshape(s * c, s * c)


@dataclass(frozen=True, eq=False)
class BSMatrix:
    lam: complex
    entries: np.ndarray

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def bs_matrix(pf: PotentialFactors, q, h: HamiltonianSpec | None = None) -> BSMatrix:
    """Dense V2 R0(lam) V1 on the support nodes."""
    if h is not None and h != pf.hamiltonian:
        raise ValueError("Hamiltonian differs from the one the factors were built for")
    if isinstance(q, ResolventQuery):
        q.validate(pf.hamiltonian)
    nd = Node.of(q)
    if pf.count == 0:
        return BSMatrix(nd.z, np.zeros((0, 0), dtype=np.complex128))
    return BSMatrix(nd.z, _weighted(pf, node_kernel(pf, nd)))


def t_matrix(pf: PotentialFactors, z) -> np.ndarray:
    return np.eye(pf.size, dtype=np.complex128) + bs_matrix(pf, z).entries


def sigma_min(pf: PotentialFactors, z) -> float:
    if pf.count == 0:
        return 1.0
    return float(sla.svdvals(t_matrix(pf, z), check_finite=False)[-1])


# ----------------------------------------------------------------------------
# oracles


def radial_bound_states(c: float, radius: float = 1.0) -> list[float]:
    """s-wave bound-state energies of -Laplacian - c on a ball (zero outside).

    With E = -kappa^2 and k^2 = c - kappa^2, the matching condition is
    k cot(k R) = -kappa.
    """
    from scipy.optimize import brentq

    out = []
    kmax = math.sqrt(c)

    def f(k):
        kap = math.sqrt(max(c - k * k, 0.0))
        return k * math.cos(k * radius) + kap * math.sin(k * radius)

    grid = np.linspace(1e-9, kmax * (1 - 1e-12), 2000)
    vals = [f(k) for k in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa * fb < 0:
            k = brentq(f, a, b, xtol=1e-14)
            out.append(k * k - c)
    return sorted(out)


def bound_state_threshold(radius: float = 1.0) -> float:
    """Well depth at which the first bound state appears: (pi / (2 R))^2."""
    return (math.pi / (2 * radius)) ** 2


def grid_eigen_oracle(c: float, n: int = 128, L: float = 16.0, radius: float = 1.0, seed: int = 0) -> float:
    """Lowest eigenvalue of the spectral-Laplacian discretization of -Laplacian - c chi_ball.

    The potential carries the cell volume fraction of the ball; the
    eigenvalue is found by LOBPCG with an FFT preconditioner.
    """
    from scipy.sparse.linalg import LinearOperator, lobpcg

    from .grid import Grid3, ball_fractions

    g = Grid3(n, L)
    flat, frac, _ = ball_fractions(g, (0.0, 0.0, 0.0), radius)
    pot = np.zeros(g.size)
    pot[flat] = -c * frac
    xi2 = g.xi_squared
    shape = g.shape

    def apply(x):
        x = np.asarray(x).reshape(shape + (-1,))
        k = np.fft.ifftn(np.fft.fftn(x, axes=(0, 1, 2)) * xi2[..., None], axes=(0, 1, 2)).real
        return (k + pot.reshape(shape)[..., None] * x).reshape(g.size, -1)

    def precond(x):
        x = np.asarray(x).reshape(shape + (-1,))
        return np.fft.ifftn(np.fft.fftn(x, axes=(0, 1, 2)) / (xi2[..., None] + c), axes=(0, 1, 2)).real.reshape(g.size, -1)

    A = LinearOperator((g.size, g.size), matvec=apply, matmat=apply, dtype=float)
    M = LinearOperator((g.size, g.size), matvec=precond, matmat=precond, dtype=float)
    r = g.radius((0.0, 0.0, 0.0)).ravel()
    rng = np.random.default_rng(seed)
    X = np.stack([np.exp(-r), np.exp(-r) * (1 + 0.01 * rng.standard_normal(g.size))], axis=1)
    vals, _ = lobpcg(A, X, M=M, largest=False, tol=1e-7, maxiter=400)
    return float(np.min(vals))


# ----------------------------------------------------------------------------
# exceptional set


def branch_points(h: HamiltonianSpec) -> tuple[float, ...]:
    return (0.0,) if h.kind == "scalar" else (-h.mu, h.mu)


def in_continuum(h: HamiltonianSpec, lam: float) -> bool:
    return lam >= 0 if h.kind == "scalar" else abs(lam) >= h.mu


@dataclass(frozen=True, eq=False)
class ExceptionalScan:
    """Samples of sigma_min(I + V2 R0(lam) V1) and the detected dips.

    ``lams`` and ``sigma`` have the sample shape: (resolution,) for a real
    window, (n_re, n_im) for a complex rectangle.
    """

    lams: np.ndarray
    sigma: np.ndarray
    dips: list
    threshold: float
    failures: list = field(default_factory=list)

    @property
    def is_real(self) -> bool:
        return self.lams.ndim == 1

    def eigenvalues(self) -> list[float]:
        return [d[0] for d in self.dips]


def _sample_sigma(pf: PotentialFactors, lam: complex, side: float, failures: list) -> float:
    try:
        return sigma_min(pf, Node(complex(lam), side if complex(lam).imag == 0 and in_continuum(pf.hamiltonian, complex(lam).real) else 0.0))
    except (np.linalg.LinAlgError, sla.LinAlgError, ValueError) as exc:
        failures.append((complex(lam), str(exc)))
        return float("nan")


def exceptional_scan(pf: PotentialFactors, window, resolution, h: HamiltonianSpec | None = None,
                     threshold: float = DIP_THRESHOLD, branch: str = "-i0", refine_tol: float = 1e-7) -> ExceptionalScan:
    """Scan sigma_min over a real window (a, b) or a complex rectangle (re_a, re_b, im_a, im_b).

    Real windows must stay ``BRANCH_EXCLUSION`` away from the branch points;
    real samples on the continuous spectrum use the ``branch`` boundary value.
    Dips (local minima below ``threshold``) of a real scan are refined by a
    bounded scalar minimization to ``refine_tol`` in lambda.
    """
    if h is not None and h != pf.hamiltonian:
        raise ValueError("Hamiltonian differs from the one the factors were built for")
    side = {"-i0": -1.0, "+i0": 1.0}[branch]
    failures: list = []
    window = tuple(float(w) for w in window)
    if len(window) == 2:
        a, b = window
        if not a < b:
            raise ValueError("window must satisfy a < b")
        for bp in branch_points(pf.hamiltonian):
            if a - BRANCH_EXCLUSION < bp < b + BRANCH_EXCLUSION:
                raise ValueError(f"window [{a}, {b}] enters the {BRANCH_EXCLUSION} neighbourhood of branch point {bp}")
        lams = np.linspace(a, b, int(resolution))
        sig = np.array([_sample_sigma(pf, x, side, failures) for x in lams])
        dips = []
        for i in range(len(lams)):
            if not sig[i] < threshold:
                continue
            left = sig[i - 1] if i > 0 else np.inf
            right = sig[i + 1] if i + 1 < len(lams) else np.inf
            if sig[i] <= left and sig[i] <= right:
                lo, hi = lams[max(i - 1, 0)], lams[min(i + 1, len(lams) - 1)]
                res = minimize_scalar(lambda x: _sample_sigma(pf, x, side, failures), bounds=(lo, hi),
                                      method="bounded", options={"xatol": refine_tol})
                dips.append((float(res.x), float(res.fun)))
        return ExceptionalScan(lams.astype(np.complex128), sig, dips, threshold, failures)
    if len(window) != 4:
        raise ValueError("window is (a, b) or (re_a, re_b, im_a, im_b)")
    nr, ni = (resolution, resolution) if np.isscalar(resolution) else resolution
    re = np.linspace(window[0], window[1], int(nr))
    im = np.linspace(window[2], window[3], int(ni))
    lams = re[:, None] + 1j * im[None, :]
    sig = np.array([[_sample_sigma(pf, z, side, failures) for z in row] for row in lams])
    dips = []
    for i in range(int(nr)):
        for j in range(int(ni)):
            if not sig[i, j] < threshold:
                continue
            nb = sig[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
            if sig[i, j] <= np.nanmin(nb):
                dips.append((complex(lams[i, j]), float(sig[i, j])))
    return ExceptionalScan(lams, sig, dips, threshold, failures)


# ----------------------------------------------------------------------------
# finite-rank operator algebra


def _coalesce(nodes: list, N: np.ndarray, m: int, axis: int):
    uniq: list = []
    pos = []
    for nd in nodes:
        if nd in uniq:
            pos.append(uniq.index(nd))
        else:
            pos.append(len(uniq))
            uniq.append(nd)
    if len(uniq) == len(nodes):
        return tuple(nodes), N
    shape = list(N.shape)
    shape[axis] = len(uniq) * m
    out = np.zeros(shape, dtype=np.complex128)
    for i, p in enumerate(pos):
        src = [slice(None)] * 2
        dst = [slice(None)] * 2
        src[axis] = slice(i * m, (i + 1) * m)
        dst[axis] = slice(p * m, (p + 1) * m)
        out[tuple(dst)] += N[tuple(src)]
    return tuple(uniq), out


@dataclass(frozen=True, eq=False)
class KreinOperator:
    """The operator sum_ij R0(left_i) E N_ij E# R0(right_j) on L^2.

    ``N`` is a (len(left) m) x (len(right) m) block matrix with m the support
    dimension.  Products, resolvent multiplications, traces and operator
    norms are exact given the node kernels.
    """

    pf: PotentialFactors
    left: tuple
    right: tuple
    N: np.ndarray

    @property
    def m(self) -> int:
        return self.pf.size

    def _blk(self, nodes_a, nodes_b, conj_a=False, conj_b=False):
        m = self.m
        out = np.zeros((len(nodes_a) * m, len(nodes_b) * m), dtype=np.complex128)
        for i, a in enumerate(nodes_a):
            for j, b in enumerate(nodes_b):
                aa = a.conj() if conj_a else a
                bb = b.conj() if conj_b else b
                out[i * m:(i + 1) * m, j * m:(j + 1) * m] = divided_difference(self.pf, aa, bb)
        return out

    def _combine(self, other: "KreinOperator", sign: float) -> "KreinOperator":
        m = self.m
        la = list(self.left) + list(other.left)
        rb = list(self.right) + list(other.right)
        N = sla.block_diag(self.N, sign * other.N)
        left, N = _coalesce(la, N, m, 0)
        right, N = _coalesce(rb, N, m, 1)
        return KreinOperator(self.pf, left, right, N)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        return KreinOperator(self.pf, self.left, self.right, self.N * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "KreinOperator") -> "KreinOperator":
        gamma = self._blk(self.right, other.left)
        return KreinOperator(self.pf, self.left, other.right, self.N @ gamma @ other.N)

    def times_resolvent(self, z) -> "KreinOperator":
        """X R0(z)."""
        zn = Node.of(z)
        m = self.m
        cols = []
        last = np.zeros((self.N.shape[0], m), dtype=np.complex128)
        for j, b in enumerate(self.right):
            if b == zn:
                raise ValueError("node collision in resolvent product")
            blk = self.N[:, j * m:(j + 1) * m] / (b.z - zn.z)
            cols.append(blk)
            last -= blk
        N = np.concatenate(cols + [last], axis=1)
        right, N = _coalesce(list(self.right) + [zn], N, m, 1)
        return KreinOperator(self.pf, self.left, right, N)

    def resolvent_times(self, z) -> "KreinOperator":
        """R0(z) X."""
        zn = Node.of(z)
        m = self.m
        rows = []
        last = np.zeros((m, self.N.shape[1]), dtype=np.complex128)
        for i, a in enumerate(self.left):
            if a == zn:
                raise ValueError("node collision in resolvent product")
            blk = self.N[i * m:(i + 1) * m, :] / (zn.z - a.z)
            rows.append(-blk)
            last += blk
        N = np.concatenate(rows + [last], axis=0)
        left, N = _coalesce(list(self.left) + [zn], N, m, 0)
        return KreinOperator(self.pf, left, self.right, N)

    def trace(self) -> complex:
        return complex(np.trace(self.N @ self._blk(self.right, self.left)))

    def _core(self) -> np.ndarray:
        gl = self._blk(self.left, self.left, conj_a=True)
        gr = self._blk(self.right, self.right, conj_b=True)
        return _psd_sqrt(gl) @ self.N @ _psd_sqrt(gr)

    def norm(self) -> float:
        if self.N.size == 0:
            return 0.0
        return float(sla.svdvals(self._core())[0])

    def singular_values(self) -> np.ndarray:
        return sla.svdvals(self._core())

    def node_matrix(self) -> np.ndarray:
        """Kernel of the operator sampled at node pairs (regularized diagonal)."""
        m = self.m
        Gl = np.concatenate([node_kernel(self.pf, a) for a in self.left], axis=1)
        Gr = np.concatenate([node_kernel(self.pf, b) for b in self.right], axis=0)
        assert Gl.shape[1] == len(self.left) * m
        return Gl @ self.N @ Gr


def _psd_sqrt(G: np.ndarray) -> np.ndarray:
    G = 0.5 * (G + G.conj().T)
    w, U = np.linalg.eigh(G)
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.conj().T


def resolvent_correction(pf: PotentialFactors, z) -> KreinOperator:
    """R0(z) - R_V(z) = R0(z) E V1 T(z)^{-1} V2 w E# R0(z)."""
    nd = Node.of(z)
    T = t_matrix(pf, nd)
    M = pf.block("V1") @ np.linalg.solve(T, pf.block("V2")) * pf.weight
    return KreinOperator(pf, (nd,), (nd,), M)


# ----------------------------------------------------------------------------
# Riesz projections


@dataclass(frozen=True, eq=False)
class RieszProjection:
    """Riesz projection -(1/2 pi i) oint (z - zeta)^k R_V(z) dz around an isolated eigenvalue.

    ``contour`` is (1/2 pi i) oint (z - zeta)^k T(z)^{-1} dz; the projection
    acts as R0(zeta) E V1 contour V2 w E# R0(zeta) (valid for poles of T^{-1}
    of order one, which ``pole_order_residual`` monitors).  ``support`` is its
    matrix on the support space (contour times T'(zeta)), whose square is
    itself exactly when the operator is.
    """

    pf: PotentialFactors
    zeta: complex
    k: int
    radius: float
    nodes: int
    contour: np.ndarray
    support: np.ndarray
    operator: KreinOperator
    pole_order_residual: float

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.support))

    def kernel_matrix(self) -> np.ndarray:
        """Kernel at node pairs times the node weight: the action on support vectors."""
        return self.operator.node_matrix() * self.pf.weight


def spectral_distance(h: HamiltonianSpec, z: complex) -> float:
    z = complex(z)
    if h.kind == "scalar":
        return abs(z) if z.real <= 0 else abs(z.imag)
    if abs(z.real) >= h.mu:
        return abs(z.imag)
    return min(abs(z - h.mu), abs(z + h.mu))


def contour_integral(pf: PotentialFactors, zeta: complex, radius: float, k=0, nodes: int = 64,
                     cond_limit: float = 1e12):
    """(1/2 pi i) oint_{|z - zeta| = radius} (z - zeta)^k T(z)^{-1} dz by the periodic trapezoid rule.

    ``k`` may be a sequence of moments, computed from the same inverses.
    The condition number at each node is the LAPACK 1-norm estimate.
    """
    ks = [k] if np.isscalar(k) else list(k)
    th = 2 * math.pi * (np.arange(nodes) + 0.5) / nodes
    acc = [np.zeros((pf.size, pf.size), dtype=np.complex128) for _ in ks]
    for t in th:
        e = np.exp(1j * t)
        z = zeta + radius * e
        T = t_matrix(pf, z)
        Ti = sla.lu_solve(_factor_checked(T, z, cond_limit), np.eye(pf.size, dtype=np.complex128))
        for a, kk in zip(acc, ks):
            a += Ti * (radius * e) ** (kk + 1)
    out = [a / nodes for a in acc]
    return out[0] if np.isscalar(k) else out


def riesz_projection(pf: PotentialFactors, zeta: complex, k: int = 0, radius: float | None = None,
                     nodes: int = 64, h: HamiltonianSpec | None = None, others=()) -> RieszProjection:
    """Riesz projection (k = 0) or its nilpotent part (k = 1) at an isolated eigenvalue."""
    if k not in (0, 1):
        raise ValueError("k must be 0 or 1")
    if h is not None and h != pf.hamiltonian:
        raise ValueError("Hamiltonian differs from the one the factors were built for")
    zeta = complex(zeta)
    gap = spectral_distance(pf.hamiltonian, zeta)
    sep = min([abs(zeta - complex(o)) for o in others if complex(o) != zeta] + [math.inf])
    if radius is None:
        radius = 0.5 * min(gap, sep)
    if not radius < gap:
        raise ValueError(f"contour of radius {radius} meets the continuous spectrum (distance {gap})")
    if not radius < sep / 2:
        raise ValueError(f"contour of radius {radius} is not separated from the other eigenvalues (distance {sep})")
    C, Cnext = contour_integral(pf, zeta, radius, (k, k + 1), nodes)
    Tp = _weighted(pf, node_kernel(pf, zeta, derivative=True))
    M = pf.block("V1") @ C @ pf.block("V2") * pf.weight
    op = KreinOperator(pf, (Node(zeta),), (Node(zeta),), M)
    scale = max(np.linalg.norm(C), 1e-300)
    return RieszProjection(pf, zeta, k, radius, nodes, C, C @ Tp, op, float(np.linalg.norm(Cnext) / scale))


def probe_factors(grid, center=(0.0, 0.0, 0.0), radius: float = 2.0, h: HamiltonianSpec | None = None) -> PotentialFactors:
    """Zero potential carried on the grid points of a ball, for free-case checks."""
    h = h or HamiltonianSpec()
    r = grid.radius(center).ravel()
    flat = np.nonzero(r < radius)[0]
    c = h.components
    zero = np.zeros((len(flat), c, c), dtype=np.complex128)
    return PotentialFactors(h, grid.h, flat, grid.flat_to_point(flat), zero, zero.copy(), zero.copy())


# ----------------------------------------------------------------------------
# continuous projection


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    """Riesz projections at the detected eigenvalues and the diagnostics of P_c = I - P_p."""

    pf: PotentialFactors
    eigenvalues: list
    radii: list
    projections: list
    nilpotents: list
    ranks: list
    rank_by_svd: list
    traces: list
    idempotency: list
    nilpotent_ratio: list
    commutator: list
    z_probe: complex

    @property
    def rank(self) -> int:
        return int(sum(self.ranks))

    def point_part(self) -> KreinOperator | None:
        """P_p as a finite-rank operator (None when there are no eigenvalues)."""
        if not self.projections:
            return None
        out = self.projections[0].operator
        for p in self.projections[1:]:
            out = out + p.operator
        return out

    def pc_idempotency(self) -> float:
        """||P_c^2 - P_c|| / ||P_c||, with ||P_c|| >= 1 whenever P_p != 0."""
        pp = self.point_part()
        if pp is None:
            return 0.0
        return (pp @ pp - pp).norm() / max(1.0, pp.norm())

    def support_projection(self) -> np.ndarray:
        """P_p acting on support vectors (cs x cs)."""
        out = np.zeros((self.pf.size, self.pf.size), dtype=np.complex128)
        for p in self.projections:
            out += p.kernel_matrix()
        return out

    def support_hamiltonian_projection(self) -> np.ndarray:
        """H P_p = sum (zeta_k P0_k + P1_k) acting on support vectors."""
        out = np.zeros((self.pf.size, self.pf.size), dtype=np.complex128)
        for p0, p1 in zip(self.projections, self.nilpotents):
            out += p0.zeta * p0.kernel_matrix() + p1.kernel_matrix()
        return out


def commutator_residual(P: KreinOperator, pf: PotentialFactors, z0: complex) -> float:
    """||[P, R_V(z0)]|| / ||R0(z0)||, where ||R0(z0)|| = 1 / dist(z0, spectrum of H0)."""
    RV = resolvent_correction(pf, z0)  # R_V = R0 - RV
    comm = P.times_resolvent(z0) - P.resolvent_times(z0) - (P @ RV) + (RV @ P)
    return comm.norm() * spectral_distance(pf.hamiltonian, z0)


def continuous_projection(pf: PotentialFactors, scan: ExceptionalScan | list, h: HamiltonianSpec | None = None,
                          nodes: int = 64, z_probe: complex = 0.3 + 1.0j) -> ProjectionSet:
    """Riesz projections at every dip of ``scan`` plus the P_c diagnostics."""
    if h is not None and h != pf.hamiltonian:
        raise ValueError("Hamiltonian differs from the one the factors were built for")
    eig = scan.eigenvalues() if isinstance(scan, ExceptionalScan) else [complex(z) for z in scan]
    eig = [complex(z) for z in eig]
    radii = []
    for i, z in enumerate(eig):
        others = [abs(z - w) for j, w in enumerate(eig) if j != i]
        gap = spectral_distance(pf.hamiltonian, z)
        r = 0.5 * min([gap] + [0.5 * o for o in others])
        for j, w in enumerate(eig[:i]):
            if abs(z - w) < r + radii[j]:
                raise ValueError(f"contours around {w} and {z} overlap")
        radii.append(r)
    projs, nils, ranks, svd_ranks, traces, idem, nil_ratio, comm = [], [], [], [], [], [], [], []
    for z, r in zip(eig, radii):
        p0 = riesz_projection(pf, z, 0, r, nodes, others=eig)
        p1 = riesz_projection(pf, z, 1, r, nodes, others=eig)
        op = p0.operator
        nrm = op.norm()
        sv = op.singular_values()
        projs.append(p0)
        nils.append(p1)
        traces.append(p0.trace)
        ranks.append(int(round(p0.trace.real)))
        svd_ranks.append(int(np.sum(sv > 1e-6 * sv[0])) if sv.size and sv[0] > 0 else 0)
        idem.append((op @ op - op).norm() / nrm)
        nil_ratio.append(p1.operator.norm() / nrm)
        comm.append(commutator_residual(op, pf, z_probe))
    return ProjectionSet(pf, eig, radii, projs, nils, ranks, svd_ranks, traces, idem, nil_ratio, comm, complex(z_probe))


# ----------------------------------------------------------------------------
# spectral resolution


@dataclass(frozen=True)
class SpectralResolution:
    value: complex
    exact: complex
    discrepancy: float
    continuous_part: complex
    point_part: complex
    tail_estimate: float
    truncations: tuple
    excluded: tuple


def _continuum_intervals(h: HamiltonianSpec):
    """(offset, direction) pairs: lam = offset + direction * k^2 for k >= 0."""
    if h.kind == "scalar":
        return [(0.0, 1.0)]
    return [(h.mu, 1.0), (-h.mu, -1.0)]


def _factor_checked(T: np.ndarray, where, limit: float = 1e12):
    """LU factors of T, raising IllConditioned when the 1-norm condition estimate exceeds ``limit``."""
    lu, piv = sla.lu_factor(T, check_finite=False)
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, _ = gecon(lu, np.linalg.norm(T, 1), norm="1")
    if not rcond > 1.0 / limit:
        raise IllConditioned(f"I + BS has condition estimate {1.0 / max(rcond, 1e-300):.3g} at lambda = {where}")
    return lu, piv


def _resolvent_apply(pf: PotentialFactors, nd: Node, f: np.ndarray, potential: bool) -> np.ndarray:
    """Node values of R_V(node) f for a support vector f (weight w)."""
    G = node_kernel(pf, nd)
    a = G @ f * pf.weight
    if potential:
        V1, V2 = pf.block("V1"), pf.block("V2")
        T = np.eye(pf.size) + (V2 @ G @ V1) * pf.weight
        b = sla.lu_solve(_factor_checked(T, nd.z), V2 @ a)
        a = a - G @ (V1 @ b) * pf.weight
    return a


def _jump_pairing(pf: PotentialFactors, lam: float, f: np.ndarray, g: np.ndarray, potential: bool, real: bool) -> complex:
    """<(R_V(lam + i0) - R_V(lam - i0)) f, g>.

    For real factors and a scalar Hamiltonian R_V(lam - i0) is the complex
    conjugate of R_V(lam + i0), which halves the work.
    """
    plus = Node(lam, 1.0)
    if real:
        a = _resolvent_apply(pf, plus, f.real, potential)
        b = _resolvent_apply(pf, plus, f.imag, potential) if np.any(f.imag) else 0.0
        rp = a + 1j * b
        rm = np.conj(a) + 1j * np.conj(b)
    else:
        rp = _resolvent_apply(pf, plus, f, potential)
        rm = _resolvent_apply(pf, Node(lam, -1.0), f, potential)
    return complex(np.vdot(g, rp - rm) * pf.weight)


def spectral_resolution_check(pf: PotentialFactors, proj: ProjectionSet | None, f: np.ndarray, g: np.ndarray,
                              lam_max: float = 40.0, nodes: int = 400, h: HamiltonianSpec | None = None) -> SpectralResolution:
    """Compare <f, g> with the continuous integral plus the point part.

    The continuous part is (1/2 pi i) int <(R_V(lam + i0) - R_V(lam - i0)) f, g> dlam
    over the continuous spectrum truncated at |lam| <= lam_max, integrated in
    k = sqrt(|lam| - offset) by Gauss-Legendre on three consecutive pieces
    ending at lam_max / 4, lam_max / 2 and lam_max.  The tail estimate fits
    I(L) = I_inf - C / L^{1/2} to the three truncations by least squares and
    reports |C| / lam_max^{1/2} relative to ||f|| ||g||.
    """
    if h is not None and h != pf.hamiltonian:
        raise ValueError("Hamiltonian differs from the one the factors were built for")
    f = np.asarray(f, dtype=np.complex128).ravel()
    g = np.asarray(g, dtype=np.complex128).ravel()
    if f.shape != (pf.size,) or g.shape != (pf.size,):
        raise ValueError("f and g must be support vectors")
    potential = bool(np.any(pf.V != 0))
    real = pf.hamiltonian.kind == "scalar" and not np.any(pf.V1.imag) and not np.any(pf.V2.imag)
    excluded = []
    pieces = [0j, 0j, 0j]
    for off, direc in _continuum_intervals(pf.hamiltonian):
        span = lam_max - abs(off)
        if span <= 0:
            continue
        ends = [0.0, math.sqrt(span / 4), math.sqrt(span / 2), math.sqrt(span)]
        per = [nodes // 4, nodes // 4, nodes - 2 * (nodes // 4)]
        for p in range(3):
            x, w = np.polynomial.legendre.leggauss(per[p])
            a, b = ends[p], ends[p + 1]
            ks = 0.5 * (b - a) * x + 0.5 * (b + a)
            ws = 0.5 * (b - a) * w
            for k, wk in zip(ks, ws):
                lam = off + direc * k * k
                try:
                    jump = _jump_pairing(pf, lam, f, g, potential, real)
                except IllConditioned:
                    excluded.append(lam)
                    continue
                pieces[p] += wk * 2 * k * jump / (2j * math.pi)
    cont = sum(pieces)
    point = 0j
    if proj is not None:
        for p0 in proj.projections:
            point += complex(np.vdot(g, p0.kernel_matrix() @ f) * pf.weight)
    exact = complex(np.vdot(g, f) * pf.weight)
    value = cont + point
    scale = math.sqrt(abs(np.vdot(f, f)) * abs(np.vdot(g, g))) * pf.weight
    c_half = pieces[0] + pieces[1]
    trunc = (complex(pieces[0] + point), complex(c_half + point), complex(value))
    x = np.array([math.sqrt(4.0 / lam_max), math.sqrt(2.0 / lam_max), math.sqrt(1.0 / lam_max)])
    design = np.stack([np.ones(3), -x], axis=1)
    coef = np.linalg.lstsq(design, np.array(trunc), rcond=None)[0]
    tail = abs(coef[1]) * x[2] / scale if scale > 0 else 0.0
    disc = abs(value - exact) / scale if scale > 0 else abs(value - exact)
    return SpectralResolution(value, exact, disc, complex(cont), point, tail, trunc, tuple(excluded))


def uniform_resolvent_bound(pf: PotentialFactors, proj: ProjectionSet, window, resolution: int = 40) -> float:
    """max over real lam in window of ||R_V(lam +- i0) P_c|| on support vectors."""
    Pp = proj.support_projection() if proj.projections else np.zeros((pf.size, pf.size))
    Pc = np.eye(pf.size) - Pp
    best = 0.0
    for lam in np.linspace(window[0], window[1], resolution):
        for side in (-1.0, 1.0):
            nd = Node(float(lam), side if in_continuum(pf.hamiltonian, float(lam)) else 0.0)
            G = node_kernel(pf, nd)
            K = G - G @ pf.block("V1") @ np.linalg.solve(t_matrix(pf, nd), pf.block("V2") @ G * pf.weight)
            best = max(best, float(sla.svdvals(K @ Pc * pf.weight)[0]))
    return best


# ----------------------------------------------------------------------------
# modified decomposition


@dataclass(frozen=True, eq=False)
class ModifiedFactors:
    """V - H P_p = F1 F2 on the support space, with the intermediate matrices."""

    A: np.ndarray
    U: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    target: np.ndarray
    kept_rank: int
    ambiguous: bool

    def residual(self) -> float:
        den = np.linalg.norm(self.target)
        return float(np.linalg.norm(self.F1 @ self.F2 - self.target) / den) if den > 0 else float(np.linalg.norm(self.F1 @ self.F2))


def _pinv_range(M: np.ndarray, rtol: float = 1e-10):
    U, s, Vh = np.linalg.svd(M)
    if s.size == 0 or s[0] == 0:
        return np.zeros_like(M.conj().T), 0, False
    keep = s > rtol * s[0]
    r = int(keep.sum())
    ambiguous = r < len(s) and s[r - 1] < 10 * max(s[r], rtol * s[0]) if r > 0 else False
    inv = (Vh[:r].conj().T / s[:r]) @ U[:, :r].conj().T
    return inv, r, bool(ambiguous)


def modified_split(pf: PotentialFactors, proj: ProjectionSet, h: HamiltonianSpec | None = None) -> ModifiedFactors:
    """Factor V - H P_p as F1 F2 through the polar decomposition of P_p.

    A = (P_p^* P_p)^{1/2}, P_p = U A, G1 = V2 (V2 + A)^+, G2 = (H P_p)(V2 + A)^+,
    F1 = V1 G1 - G2 and F2 = V2 + A; the pseudo-inverse keeps singular values
    above 1e-10 of the largest.
    """
    if h is not None and h != pf.hamiltonian:
        raise ValueError("Hamiltonian differs from the one the factors were built for")
    n = pf.size
    Pp = proj.support_projection() if proj.projections else np.zeros((n, n), dtype=np.complex128)
    HPp = proj.support_hamiltonian_projection() if proj.projections else np.zeros((n, n), dtype=np.complex128)
    V, V1, V2 = pf.block("V"), pf.block("V1"), pf.block("V2")
    if n and np.any(Pp != 0):
        U, A = sla.polar(Pp, side="right")
    else:
        U, A = np.eye(n, dtype=np.complex128), np.zeros((n, n), dtype=np.complex128)
    F2 = V2 + A
    inv, rank, ambiguous = _pinv_range(F2)
    if ambiguous:
        warnings.warn("rank decision for V2 + A is ambiguous (gap below 10x)", RuntimeWarning, stacklevel=2)
    G1 = V2 @ inv
    G2 = HPp @ inv
    F1 = V1 @ G1 - G2
    return ModifiedFactors(A, U, G1, G2, F1, F2, V - HPp, rank, ambiguous)


def modified_sigma_min(pf: PotentialFactors, mf: ModifiedFactors, z) -> float:
    """sigma_min(I + F2 w G(z) F1)."""
    M = np.eye(pf.size) + mf.F2 @ node_kernel(pf, z) @ mf.F1 * pf.weight
    return float(sla.svdvals(M)[-1])


def modified_bs_matrix(pf: PotentialFactors, proj: ProjectionSet, z) -> np.ndarray:
    """Birman-Schwinger matrix of V - H P_p in the exact finite-rank factorization.

    With H P_p = sum_k R0(zeta_k) E N_k E# R0(zeta_k), write
    V - H P_p = B1 B2 where B2 = [V2 w E#; E# R0(zeta_k)] and
    B1 = [E V1, -R0(zeta_k) E N_k]; the matrix is I + B2 R0(z) B1, assembled
    from node kernels and their first and second divided differences.
    """
    nd = Node.of(z)
    m = pf.size
    V1, V2 = pf.block("V1"), pf.block("V2")
    Ns = [p0.zeta * p0.operator.N + p1.operator.N for p0, p1 in zip(proj.projections, proj.nilpotents)]
    zs = [Node(p0.zeta) for p0 in proj.projections]
    K = len(zs)
    B = np.zeros(((K + 1) * m, (K + 1) * m), dtype=np.complex128)
    B[:m, :m] = V2 @ node_kernel(pf, nd) @ V1 * pf.weight
    for j, (zj, Nj) in enumerate(zip(zs, Ns)):
        cj = slice((j + 1) * m, (j + 2) * m)
        B[:m, cj] = -V2 @ divided_difference(pf, nd, zj) @ Nj * pf.weight
        B[cj, :m] = divided_difference(pf, zj, nd) @ V1
        for i, zi in enumerate(zs):
            ci = slice((i + 1) * m, (i + 2) * m)
            # E# R0(zeta_i) R0(z) R0(zeta_j) E
            d_iz = divided_difference(pf, zi, nd)
            d_ij = divided_difference(pf, zi, zj)
            B[ci, cj] = -(d_iz - d_ij) / (nd.z - zj.z) @ Nj
    return np.eye((K + 1) * m) + B


def modified_exact_sigma_min(pf: PotentialFactors, proj: ProjectionSet, z) -> float:
    return float(sla.svdvals(modified_bs_matrix(pf, proj, z))[-1])
