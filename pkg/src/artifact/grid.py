"""Periodized uniform 3D grids, sampled functions, quadrature and scenario files.

The box is ``[-L/2, L/2)^3`` sampled at ``x_i = -L/2 + i h`` with ``h = L/n``.
Every cell carries the quadrature weight ``h**3``.  Functions have one
component (scalar Hamiltonian) or two components (matrix Hamiltonian); the
pointwise modulus of a two-component function is the Euclidean norm of the
2-vector.

Fourier transforms use the unitary discrete normalization
(``numpy.fft`` with ``norm="ortho"``) and physical wavenumbers
``xi = 2 pi k / L``.  With this choice the discrete Parseval identity holds
with the same ``h**3`` weight on both sides, and a coefficient ``c_k``
corresponds to the coefficient ``h**1.5 * c_k`` of ``f`` against the
orthonormal basis ``exp(i xi.x) / L**1.5`` of ``L^2`` of the box.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

BOUNDARY_FLAG_THRESHOLD = 1e-3
RAW_MAGIC = b"ARTGRID1"
RAW_HEADER = struct.Struct("<8sIIQQ")  # magic, n, components, reserved, reserved


class ScenarioError(ValueError):
    """Raised when a scenario file or its content fails validation."""


def _fft_size(n: int) -> bool:
    m = n // 3 if n % 3 == 0 else n
    return n >= 2 and m >= 1 and m & (m - 1) == 0 and n % 2 == 0


@dataclass(frozen=True)
class Grid3:
    """Uniform periodic grid with ``n`` points per axis on a box of side ``L``."""

    n: int
    L: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _fft_size(int(self.n)):
            raise ValueError(f"n_per_axis must be a power of two or three times one (>= 2), got {self.n!r}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"box length must be positive, got {self.L!r}")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def size(self) -> int:
        return self.n**3

    @cached_property
    def axis(self) -> np.ndarray:
        return -0.5 * self.L + self.h * np.arange(self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays (shapes (n,1,1), (1,n,1), (1,1,n))."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    def radius(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        x, y, z = self.coordinates()
        return np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2)

    @cached_property
    def xi_squared(self) -> np.ndarray:
        k = self.wavenumbers
        return k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2

    def wavevectors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.wavenumbers
        return k[:, None, None], k[None, :, None], k[None, None, :]

    def flat_to_point(self, index) -> np.ndarray:
        """Physical coordinates of flat (C-order) grid indices."""
        i, j, k = np.unravel_index(np.asarray(index), self.shape)
        a = self.axis
        return np.stack([a[i], a[j], a[k]], axis=-1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples on a grid; ``values`` has shape ``(components, n, n, n)``."""

    grid: Grid3
    values: np.ndarray
    domain: str = field(default="space")

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 3:
            v = v[None]
        if v.ndim != 4 or v.shape[1:] != self.grid.shape or v.shape[0] not in (1, 2):
            raise ValueError(
                f"value array of shape {np.shape(self.values)} does not match grid "
                f"{self.grid.shape} with 1 or 2 components"
            )
        v = np.array(v, dtype=np.complex128, copy=True)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.domain not in ("space", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")

    @property
    def components(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, grid: Grid3, components: int = 1) -> "GridFunction":
        return cls(grid, np.zeros((components,) + grid.shape, dtype=np.complex128))

    def modulus(self) -> np.ndarray:
        """Pointwise modulus (Euclidean norm over components), shape (n, n, n)."""
        if self.components == 1:
            return np.abs(self.values[0])
        return np.sqrt(np.sum(np.abs(self.values) ** 2, axis=0))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.domain)

    def _check(self, other: "GridFunction"):
        if other.grid != self.grid or other.components != self.components or other.domain != self.domain:
            raise ValueError("grid functions live on different grids, components or domains")

    def __add__(self, other):
        self._check(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar):
        return self.with_values(self.values * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def inner(self, other: "GridFunction") -> complex:
        """``<self, other>`` with the conjugate on ``self`` and weight h^3."""
        self._check(other)
        return complex(np.vdot(self.values, other.values) * self.grid.cell_volume)


def spectral_transform(f: GridFunction, direction: str = "forward") -> GridFunction:
    """Unitary DFT of every component (forward: space -> frequency)."""
    if direction == "forward":
        if f.domain != "space":
            raise ValueError("forward transform expects a space-domain function")
        out = np.fft.fftn(f.values, axes=(1, 2, 3), norm="ortho")
        return GridFunction(f.grid, out, "frequency")
    if direction == "inverse":
        if f.domain != "frequency":
            raise ValueError("inverse transform expects a frequency-domain function")
        out = np.fft.ifftn(f.values, axes=(1, 2, 3), norm="ortho")
        return GridFunction(f.grid, out, "space")
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def lp_norm(f: GridFunction, p: float) -> float:
    """Discrete Lebesgue norm ``(sum |f|^p h^3)^(1/p)``; ``p = inf`` gives the max."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p!r}")
    mod = f.modulus()
    if math.isinf(p):
        return float(mod.max())
    if p == 2:
        return float(math.sqrt(np.sum(mod * mod) * f.grid.cell_volume))
    return float((np.sum(mod**p) * f.grid.cell_volume) ** (1.0 / p))


def boundary_mass(f: GridFunction) -> float:
    """Fraction of ``|f|^2`` within 2h of the box boundary (any axis)."""
    mod2 = f.modulus() ** 2
    total = mod2.sum()
    if total == 0:
        return 0.0
    n = f.grid.n
    inner = mod2[2 : n - 2, 2 : n - 2, 2 : n - 2].sum()
    return float((total - inner) / total)


# ---------------------------------------------------------------------------
# raw sample files


def write_raw_samples(path, f: GridFunction) -> None:
    """Write little-endian complex64 samples preceded by a 32-byte header."""
    header = RAW_HEADER.pack(RAW_MAGIC, f.grid.n, f.components, 0, 0)
    data = f.values.astype("<c8").tobytes(order="C")
    Path(path).write_bytes(header + data)


def read_raw_samples(path, grid: Grid3 | None = None, L: float | None = None) -> GridFunction:
    """Read a raw sample file; the box length comes from ``grid`` or ``L``."""
    blob = Path(path).read_bytes()
    if len(blob) < RAW_HEADER.size:
        raise ScenarioError(f"{path}: truncated header")
    magic, n, comps, _, _ = RAW_HEADER.unpack_from(blob)
    if magic != RAW_MAGIC:
        raise ScenarioError(f"{path}: bad magic {magic!r}")
    expected = RAW_HEADER.size + 8 * comps * n**3
    if len(blob) != expected:
        raise ScenarioError(f"{path}: expected {expected} bytes, found {len(blob)}")
    if grid is None:
        if L is None:
            raise ValueError("box length needed to interpret raw samples")
        grid = Grid3(int(n), float(L))
    elif grid.n != n:
        raise ScenarioError(f"{path}: file has n={n}, scenario grid has n={grid.n}")
    vals = np.frombuffer(blob, dtype="<c8", offset=RAW_HEADER.size).reshape((comps,) + grid.shape)
    return GridFunction(grid, vals.astype(np.complex128))


# ---------------------------------------------------------------------------
# scenario text format
#
# Line-oriented: "[section]" or "[section.sub]" headers, "key = value" pairs,
# "#" comments.  Values are kept as strings by the parser; typed access and
# validation happen in ``Scenario.from_sections``.


def format_float(x: float) -> str:
    """Decimal text with 17 significant digits (round-trips exactly)."""
    return format(float(x), ".17g")


def parse_scenario_text(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ScenarioError(f"line {lineno}: malformed section header {raw!r}")
            current = line[1:-1].strip()
            if current in sections:
                raise ScenarioError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ScenarioError(f"line {lineno}: key outside of any section")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ScenarioError(f"line {lineno}: empty key")
        if key in sections[current]:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value
    return sections


def emit_scenario_text(sections: dict[str, dict[str, str]]) -> str:
    lines = []
    for name, entries in sections.items():
        lines.append(f"[{name}]")
        for key, value in entries.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def _floats(text: str, count: int | None = None, what: str = "value") -> list[float]:
    try:
        vals = [float(s) for s in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ScenarioError(f"cannot parse {what} {text!r}") from exc
    if count is not None and len(vals) != count:
        raise ScenarioError(f"{what} needs {count} numbers, got {text!r}")
    return vals


@dataclass(frozen=True)
class ShapeSpec:
    """Named analytic potential shape (or a file of samples)."""

    kind: str  # "ball" | "gaussian" | "file"
    amplitude: complex = 0.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0  # ball radius, or gaussian cutoff radius
    width: float = 1.0  # gaussian width
    path: str = ""

    def support_radius(self) -> float:
        return self.radius

    def to_entries(self) -> dict[str, str]:
        out = {"shape": self.kind}
        if self.kind == "file":
            out["path"] = self.path
            return out
        a = complex(self.amplitude)
        out["amplitude"] = format_float(a.real) if a.imag == 0 else f"{format_float(a.real)} {format_float(a.imag)}"
        out["center"] = " ".join(format_float(c) for c in self.center)
        out["radius"] = format_float(self.radius)
        if self.kind == "gaussian":
            out["width"] = format_float(self.width)
        return out

    @classmethod
    def from_entries(cls, entries: dict[str, str], where: str) -> "ShapeSpec":
        kind = entries.get("shape")
        if kind not in ("ball", "gaussian", "file"):
            raise ScenarioError(f"[{where}] shape must be ball, gaussian or file, got {kind!r}")
        if kind == "file":
            if "path" not in entries:
                raise ScenarioError(f"[{where}] file shape needs a path")
            return cls(kind="file", path=entries["path"])
        amp = _floats(entries.get("amplitude", ""), what=f"[{where}] amplitude")
        if len(amp) not in (1, 2):
            raise ScenarioError(f"[{where}] amplitude must be 're' or 're im'")
        center = tuple(_floats(entries.get("center", "0 0 0"), 3, f"[{where}] center"))
        width = _floats(entries.get("width", "1"), 1, f"[{where}] width")[0]
        default_radius = "1" if kind == "ball" else format_float(4.0 * width)
        radius = _floats(entries.get("radius", default_radius), 1, f"[{where}] radius")[0]
        if radius <= 0 or width <= 0:
            raise ScenarioError(f"[{where}] radius and width must be positive")
        return cls(kind=kind, amplitude=complex(amp[0], amp[1] if len(amp) == 2 else 0.0),
                   center=center, radius=radius, width=width)


@dataclass(frozen=True)
class FrameSpec:
    """Gauge frame samples: v(t) = v cos(omega t), A(t) = A cos(omega t)."""

    v: tuple[float, float, float] = (0.0, 0.0, 0.0)
    A: float = 0.0
    omega: float = 0.0

    def scaled(self, s: float) -> "FrameSpec":
        return FrameSpec(tuple(s * c for c in self.v), s * self.A, self.omega)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        return np.cos(self.omega * t)[..., None] * np.asarray(self.v)

    def phase_rate(self, t):
        t = np.asarray(t, dtype=float)
        return self.A * np.cos(self.omega * t)


@dataclass(frozen=True, eq=False)
class GridPotential:
    """A potential instantiated on the grid at its support points.

    ``values[j]`` is the pointwise ``c x c`` matrix of V at the cell with flat
    index ``indices[j]``; ``nodes[j]`` is the quadrature node used for that
    cell (the centroid of the cell's portion inside the shape for ball
    indicators, the cell point otherwise).
    """

    grid: Grid3
    indices: np.ndarray
    values: np.ndarray
    nodes: np.ndarray

    @property
    def components(self) -> int:
        return self.values.shape[1]

    @property
    def count(self) -> int:
        return len(self.indices)

    def dense(self) -> np.ndarray:
        """Pointwise potential on the whole grid, shape (c, c, n, n, n)."""
        c = self.components
        out = np.zeros((c, c, self.grid.size), dtype=np.complex128)
        out[:, :, self.indices] = np.transpose(self.values, (1, 2, 0))
        return out.reshape((c, c) + self.grid.shape)

    def sup_norm(self) -> float:
        if self.count == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, ord=2, axis=(1, 2))))


def ball_fractions(grid: Grid3, center, radius, sub: int = 8):
    """Volume fraction of each cell inside a ball, plus the inside centroid.

    Cells are the cubes of side h centred at the grid points; each cell is
    subsampled by ``sub**3`` midpoints.  Returns (flat indices, fractions,
    centroids) for cells with a positive fraction.
    """
    h = grid.h
    c = np.asarray(center, dtype=float)
    lo = np.floor((c - radius - h - grid.axis[0]) / h).astype(int)
    hi = np.ceil((c + radius + h - grid.axis[0]) / h).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, grid.n - 1)
    idx = [np.arange(lo[d], hi[d] + 1) for d in range(3)]
    I, J, K = np.meshgrid(*idx, indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    pts = np.stack([grid.axis[I], grid.axis[J], grid.axis[K]], axis=1)
    q = (np.arange(sub) + 0.5) / sub - 0.5
    Q = np.stack(np.meshgrid(q, q, q, indexing="ij"), axis=-1).reshape(-1, 3) * h
    fractions = np.empty(len(pts))
    centroids = np.empty_like(pts)
    for start in range(0, len(pts), 512):
        p = pts[start : start + 512]
        sp = p[:, None, :] + Q[None]
        inside = np.sum((sp - c) ** 2, axis=-1) < radius**2
        cnt = inside.sum(axis=1)
        fractions[start : start + 512] = cnt / len(Q)
        with np.errstate(invalid="ignore", divide="ignore"):
            cen = np.einsum("ij,ijk->ik", inside, sp) / cnt[:, None]
        centroids[start : start + 512] = np.where(cnt[:, None] > 0, cen, p)
    keep = fractions > 0
    flat = np.ravel_multi_index((I[keep], J[keep], K[keep]), grid.shape)
    return flat, fractions[keep], centroids[keep]


def _shape_samples(grid: Grid3, spec: ShapeSpec, base: Path | None):
    """(flat indices, complex values, nodes, ball flag) for one shape."""
    if spec.kind == "ball":
        flat, frac, cen = ball_fractions(grid, spec.center, spec.radius)
        return flat, spec.amplitude * frac, cen, True
    if spec.kind == "gaussian":
        r = grid.radius(spec.center).ravel()
        flat = np.nonzero(r < spec.radius)[0]
        vals = spec.amplitude * np.exp(-(r[flat] ** 2) / (2 * spec.width**2))
        return flat, vals, grid.flat_to_point(flat), False
    raise ScenarioError("file potentials are instantiated as a whole, not per shape")


def instantiate_potential(grid: Grid3, kind: str, shapes: dict[str, ShapeSpec], base: Path | None = None) -> GridPotential:
    """Instantiate a scalar V or a matrix (W1, W2) potential on the grid.

    Matrix potentials are ``[[W1, W2], [-conj(W2), -W1]]`` pointwise.
    """
    c = 1 if kind == "scalar" else 2
    names = ["V"] if kind == "scalar" else ["W1", "W2"]
    if any(shapes[nm].kind == "file" for nm in names if nm in shapes):
        spec = next(shapes[nm] for nm in names if nm in shapes)
        path = Path(spec.path)
        if base is not None and not path.is_absolute():
            path = base / path
        f = read_raw_samples(path, grid=grid)
        if f.components != c:
            raise ScenarioError(f"{path}: expected {c} component(s), found {f.components}")
        comps = f.values.reshape(c, -1)
        flat = np.nonzero(np.any(comps != 0, axis=0))[0]
        fields = {nm: comps[i, flat] for i, nm in enumerate(names)}
        nodes = grid.flat_to_point(flat)
    else:
        pieces = {nm: _shape_samples(grid, shapes[nm], base) for nm in names if nm in shapes}
        flat = np.unique(np.concatenate([p[0] for p in pieces.values()])) if pieces else np.zeros(0, int)
        fields = {}
        nodes = grid.flat_to_point(flat)
        node_set = False
        for nm, (fi, vals, cen, is_ball) in pieces.items():
            full = np.zeros(len(flat), dtype=np.complex128)
            pos = np.searchsorted(flat, fi)
            full[pos] = vals
            fields[nm] = full
            if is_ball and not node_set:
                nodes = nodes.copy()
                nodes[pos] = cen
                node_set = True
    s = len(flat)
    values = np.zeros((s, c, c), dtype=np.complex128)
    if kind == "scalar":
        values[:, 0, 0] = fields.get("V", np.zeros(s))
    else:
        w1 = fields.get("W1", np.zeros(s))
        w2 = fields.get("W2", np.zeros(s))
        values[:, 0, 0] = w1
        values[:, 0, 1] = w2
        values[:, 1, 0] = -np.conj(w2)
        values[:, 1, 1] = -w1
    keep = np.any(values.reshape(s, c * c) != 0, axis=1)
    return GridPotential(grid, flat[keep], values[keep], nodes[keep])


@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated scenario: grid, Hamiltonian form, potential, frame and scan settings."""

    grid: Grid3
    kind: str
    mu: float
    shapes: dict
    potential: GridPotential
    frame: FrameSpec | None = None
    scan: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)

    @property
    def components(self) -> int:
        return 1 if self.kind == "scalar" else 2

    def to_text(self) -> str:
        return emit_scenario_text(self.sections)

    @classmethod
    def from_sections(cls, sections: dict[str, dict[str, str]], base: Path | None = None) -> "Scenario":
        if "grid" not in sections:
            raise ScenarioError("missing [grid] section")
        g = sections["grid"]
        try:
            grid = Grid3(int(g["n"]), float(g["L"]))
        except KeyError as exc:
            raise ScenarioError(f"[grid] missing key {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise ScenarioError(f"[grid] {exc}") from exc
        ham = sections.get("hamiltonian", {})
        kind = ham.get("kind", "scalar")
        if kind not in ("scalar", "matrix"):
            raise ScenarioError(f"[hamiltonian] kind must be scalar or matrix, got {kind!r}")
        mu = 0.0
        if kind == "matrix":
            if "mu" not in ham:
                raise ScenarioError("matrix case requires gap mu > 0")
            mu = _floats(ham["mu"], 1, "[hamiltonian] mu")[0]
            if not mu > 0:
                raise ScenarioError("matrix case requires gap mu > 0")
        names = ["V"] if kind == "scalar" else ["W1", "W2"]
        shapes = {}
        for nm in names:
            key = f"potential.{nm}"
            if key in sections:
                shapes[nm] = ShapeSpec.from_entries(sections[key], key)
        for key in sections:
            if key.startswith("potential.") and key[len("potential."):] not in names:
                raise ScenarioError(f"section [{key}] is not valid for the {kind} case")
        margin = grid.L / 4
        for nm, spec in shapes.items():
            if spec.kind == "file":
                continue
            reach = max(abs(c) for c in spec.center) + spec.support_radius()
            if grid.L / 2 - reach < margin:
                raise ScenarioError(
                    f"potential {nm} reaches {reach:g} from the origin; support margin "
                    f"{grid.L / 2 - reach:g} is below L/4 = {margin:g}"
                )
        frame = None
        if "frame" in sections:
            fr = sections["frame"]
            frame = FrameSpec(
                v=tuple(_floats(fr.get("v", "0 0 0"), 3, "[frame] v")),
                A=_floats(fr.get("A", "0"), 1, "[frame] A")[0],
                omega=_floats(fr.get("omega", "0"), 1, "[frame] omega")[0],
            )
        scan = {}
        if "scan" in sections:
            sc = sections["scan"]
            if "window" in sc:
                lo, hi = _floats(sc["window"].replace(":", " "), 2, "[scan] window")
                scan["window"] = (lo, hi)
            if "resolution" in sc:
                scan["resolution"] = int(sc["resolution"])
            if "threshold" in sc:
                scan["threshold"] = float(sc["threshold"])
        potential = instantiate_potential(grid, kind, shapes, base)
        if potential.count:
            idx = np.array(np.unravel_index(potential.indices, grid.shape))
            edge = np.minimum(idx, grid.n - 1 - idx).min() * grid.h
            if edge < margin - grid.h:
                raise ScenarioError(f"potential samples come within {edge:g} of the boundary; margin L/4 = {margin:g}")
        return cls(grid, kind, mu, shapes, potential, frame, scan, sections)


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file {path} does not exist")
    sections = parse_scenario_text(path.read_text())
    return Scenario.from_sections(sections, base=path.parent)


def make_scenario(n: int, L: float, kind: str = "scalar", mu: float | None = None,
                  shapes: dict[str, ShapeSpec] | None = None, frame: FrameSpec | None = None,
                  scan: dict | None = None) -> Scenario:
    """Build a scenario programmatically (through the same text sections)."""
    sections: dict[str, dict[str, str]] = {"grid": {"n": str(n), "L": format_float(L)}}
    ham = {"kind": kind}
    if mu is not None:
        ham["mu"] = format_float(mu)
    sections["hamiltonian"] = ham
    for nm, spec in (shapes or {}).items():
        sections[f"potential.{nm}"] = spec.to_entries()
    if frame is not None:
        sections["frame"] = {
            "v": " ".join(format_float(c) for c in frame.v),
            "A": format_float(frame.A),
            "omega": format_float(frame.omega),
        }
    if scan:
        sc = {}
        if "window" in scan:
            sc["window"] = f"{format_float(scan['window'][0])}:{format_float(scan['window'][1])}"
        if "resolution" in scan:
            sc["resolution"] = str(int(scan["resolution"]))
        if "threshold" in scan:
            sc["threshold"] = format_float(scan["threshold"])
        sections["scan"] = sc
    return Scenario.from_sections(sections)


def well_scenario(c: float, n: int = 64, L: float = 16.0, radius: float = 1.0) -> Scenario:
    """Scalar square well ``V = -c`` on the ball of the given radius."""
    shapes = {"V": ShapeSpec("ball", amplitude=-c, radius=radius)} if c != 0 else {}
    return make_scenario(n, L, "scalar", shapes=shapes)
