"""Structured box grids, nodal fields and finite-difference calculus.

Node arrays are indexed ``[i, j, k]`` with ``i`` along x1. Non-periodic
boxes place nodes on both faces (spacing ``L/(n-1)``); periodic boxes drop
the duplicate far face (spacing ``L/n``).

Binary field format (``save_field``/``load_field``)::

    line 1 (ASCII): INCFIELD 1 <Lx> <Ly> <Lz> <nx> <ny> <nz> <ncomp> <periodic> <gamma>
    payload:        ncomp * nx * ny * nz little-endian float64, C order
                    (component slowest, then i, j, k)

``<gamma>`` is ``none``, ``full`` or ``face:<axis>:<side>``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np

__all__ = [
    "FULL",
    "Face",
    "BoxDomain",
    "VectorField",
    "TensorField",
    "PreconditionError",
    "gradient",
    "divergence",
    "curl",
    "strain",
    "integrate",
    "norm_w1p",
    "norm_lp",
    "grisvard_check",
    "restrict",
    "save_field",
    "load_field",
]

FULL = "full"


class PreconditionError(ValueError):
    """Input violates the documented precondition of an operation."""


@dataclass(frozen=True)
class Face:
    """One face of the box: ``axis`` in {0,1,2}, ``side`` 0 (low) or 1 (high)."""

    axis: int
    side: int

    def __post_init__(self):
        if self.axis not in (0, 1, 2) or self.side not in (0, 1):
            raise ValueError(f"invalid face {self.axis, self.side}")


GammaMarker = Union[None, str, Face]


@dataclass(frozen=True)
class BoxDomain:
    extents: tuple[float, float, float] = (1.0, 1.0, 1.0)
    shape: tuple[int, int, int] = (17, 17, 17)
    gamma: GammaMarker = FULL
    periodic: bool = False
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.extents) != 3 or len(self.shape) != 3:
            raise ValueError("box domains are three-dimensional")
        if any(e <= 0 for e in self.extents):
            raise ValueError("extents must be positive")
        if any(n < 3 for n in self.shape):
            raise ValueError("need at least 3 nodes per axis")
        if self.periodic and self.gamma is not None:
            raise ValueError("periodic domains carry no Dirichlet marker")
        if self.gamma is not None and self.gamma != FULL and not isinstance(self.gamma, Face):
            raise ValueError(f"unknown Dirichlet marker {self.gamma!r}")

    @property
    def spacing(self) -> tuple[float, float, float]:
        if self.periodic:
            return tuple(e / n for e, n in zip(self.extents, self.shape))
        return tuple(e / (n - 1) for e, n in zip(self.extents, self.shape))

    @property
    def cell_shape(self) -> tuple[int, int, int]:
        return tuple(n - 1 for n in self.shape)

    def axes(self) -> list[np.ndarray]:
        return [o + d * np.arange(n) for o, d, n in zip(self.origin, self.spacing, self.shape)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (3, nx, ny, nz)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if self.periodic:
            return mask
        for ax in range(3):
            idx = [slice(None)] * 3
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def gamma_mask(self) -> np.ndarray:
        """Nodes where the Dirichlet condition is imposed."""
        if self.gamma is None:
            return np.zeros(self.shape, dtype=bool)
        if self.gamma == FULL:
            return self.boundary_mask()
        mask = np.zeros(self.shape, dtype=bool)
        idx = [slice(None)] * 3
        idx[self.gamma.axis] = 0 if self.gamma.side == 0 else -1
        mask[tuple(idx)] = True
        return mask

    def with_shape(self, shape) -> "BoxDomain":
        return BoxDomain(self.extents, tuple(shape), self.gamma, self.periodic, self.origin)

    def with_gamma(self, gamma: GammaMarker) -> "BoxDomain":
        return BoxDomain(self.extents, self.shape, gamma, self.periodic, self.origin)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def gamma_label(self) -> str:
        if self.gamma is None:
            return "none"
        if self.gamma == FULL:
            return "full"
        return f"face:{self.gamma.axis}:{self.gamma.side}"

    @staticmethod
    def parse_gamma(label: str) -> GammaMarker:
        label = label.strip().lower()
        if label in ("none", ""):
            return None
        if label == "full":
            return FULL
        if label.startswith("face"):
            _, axis, side = label.split(":")
            return Face(int(axis), int(side))
        raise ValueError(f"unknown Dirichlet marker {label!r}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class VectorField:
    """Three nodal components, ``data.shape == (3, *domain.shape)``."""

    domain: BoxDomain
    data: np.ndarray

    def __post_init__(self):
        data = _readonly(self.data)
        if data.shape != (3,) + self.domain.shape:
            raise ValueError(f"field shape {data.shape} does not match domain {self.domain.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, domain: BoxDomain) -> "VectorField":
        return cls(domain, np.zeros((3,) + domain.shape))

    @classmethod
    def from_function(cls, domain: BoxDomain, fn: Callable[[np.ndarray], np.ndarray]) -> "VectorField":
        """Sample ``fn`` (points of shape (N, 3) -> values (N, 3)) at the nodes."""
        pts = domain.coords().reshape(3, -1).T
        vals = np.asarray(fn(pts), dtype=float)
        return cls(domain, vals.T.reshape((3,) + domain.shape))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.domain, self.data + other.data)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.domain, self.data - other.data)

    def __mul__(self, s: float) -> "VectorField":
        return VectorField(self.domain, self.data * s)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField":
        return VectorField(self.domain, -self.data)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.data**2, axis=0))

    def satisfies_dirichlet(self, tol: float = 0.0, values: "VectorField | None" = None) -> bool:
        mask = self.domain.gamma_mask()
        target = 0.0 if values is None else values.data[:, mask]
        return bool(np.all(np.abs(self.data[:, mask] - target) <= tol))

    def mean(self) -> np.ndarray:
        return np.array([integrate(self.domain, c) for c in self.data]) / self.domain.volume


@dataclass(frozen=True, eq=False)
class TensorField:
    """Nine nodal components, ``data[i, j] = d v_i / d x_j``."""

    domain: BoxDomain
    data: np.ndarray

    def __post_init__(self):
        data = _readonly(self.data)
        if data.shape != (3, 3) + self.domain.shape:
            raise ValueError("tensor field shape does not match domain")
        object.__setattr__(self, "data", data)

    def transpose(self) -> "TensorField":
        return TensorField(self.domain, np.swapaxes(self.data, 0, 1))

    def trace(self) -> np.ndarray:
        return self.data[0, 0] + self.data[1, 1] + self.data[2, 2]

    def frobenius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.data**2, axis=(0, 1)))

    def pointwise(self) -> np.ndarray:
        """Matrices at the nodes, shape (nx, ny, nz, 3, 3)."""
        return np.moveaxis(self.data, (0, 1), (-2, -1))


def _diff(domain: BoxDomain, f: np.ndarray, axis: int) -> np.ndarray:
    d = domain.spacing[axis]
    if domain.periodic:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * d)
    return np.gradient(f, d, axis=axis, edge_order=2)


def scalar_gradient(domain: BoxDomain, f: np.ndarray) -> VectorField:
    return VectorField(domain, np.stack([_diff(domain, f, a) for a in range(3)]))


def gradient(v: VectorField) -> TensorField:
    """Second-order differences: central inside, one-sided on boundary nodes."""
    dom = v.domain
    return TensorField(dom, np.stack([np.stack([_diff(dom, v.data[i], j) for j in range(3)]) for i in range(3)]))


def divergence(v: VectorField) -> np.ndarray:
    dom = v.domain
    return sum(_diff(dom, v.data[i], i) for i in range(3))


def curl(v: VectorField) -> VectorField:
    dom = v.domain
    d = lambda i, j: _diff(dom, v.data[i], j)  # noqa: E731
    return VectorField(dom, np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]))


def strain(v: VectorField) -> TensorField:
    g = gradient(v).data
    return TensorField(v.domain, 0.5 * (g + np.swapaxes(g, 0, 1)))


def quadrature_weights(domain: BoxDomain) -> np.ndarray:
    """Trapezoidal weights (rectangle rule on periodic boxes)."""
    ws = []
    for d, n in zip(domain.spacing, domain.shape):
        w = np.full(n, d)
        if not domain.periodic:
            w[0] = w[-1] = 0.5 * d
        ws.append(w)
    return ws[0][:, None, None] * ws[1][None, :, None] * ws[2][None, None, :]


def integrate(domain: BoxDomain, values, integrand: Callable | None = None) -> float:
    """Quadrature of nodal values over the box.

    ``values`` is a nodal array (or a field, in which case ``integrand``
    maps the field data to a nodal array).
    """
    if integrand is not None:
        values = integrand(values.data if hasattr(values, "data") else values)
    values = np.asarray(values, dtype=float)
    if values.shape != domain.shape:
        raise ValueError(f"integrand has shape {values.shape}, expected {domain.shape}")
    return float(np.sum(quadrature_weights(domain) * values))


def norm_lp(v: VectorField, p: float = 2.0) -> float:
    return integrate(v.domain, v.magnitude() ** p) ** (1.0 / p)


def norm_w1p(v: VectorField, p: float = 2.0, grad: TensorField | None = None) -> float:
    """``(int |v|^p + int |grad v|^p)^(1/p)``; ``grad`` overrides the difference gradient."""
    if grad is None:
        grad = gradient(v)
    return (integrate(v.domain, v.magnitude() ** p) + integrate(v.domain, grad.frobenius() ** p)) ** (1.0 / p)


def grisvard_check(zeta: VectorField, tol: float = 1e-12) -> tuple[float, float, float]:
    """``int |grad z|^2`` against ``int |curl z|^2 + int (div z)^2`` for z vanishing on the boundary."""
    dom = zeta.domain
    if dom.periodic:
        raise PreconditionError("grisvard_check needs a bounded box")
    bmask = dom.boundary_mask()
    trace = np.max(np.abs(zeta.data[:, bmask])) if bmask.any() else 0.0
    if trace > tol:
        raise PreconditionError(f"field does not vanish on the boundary (max |trace| = {trace:.3e})")
    lhs = integrate(dom, gradient(zeta).frobenius() ** 2)
    rhs = integrate(dom, curl(zeta).magnitude() ** 2) + integrate(dom, divergence(zeta) ** 2)
    return lhs, rhs, abs(lhs - rhs)


def restrict(v: VectorField, lo: tuple[int, int, int], hi: tuple[int, int, int]) -> VectorField:
    """Sub-box of nodes ``lo <= idx < hi`` as a field on its own (non-periodic) domain."""
    dom = v.domain
    sl = tuple(slice(a, b) for a, b in zip(lo, hi))
    shape = tuple(b - a for a, b in zip(lo, hi))
    ext = tuple(d * (n - 1) for d, n in zip(dom.spacing, shape))
    origin = tuple(o + d * a for o, d, a in zip(dom.origin, dom.spacing, lo))
    sub = BoxDomain(ext, shape, None, False, origin)
    return VectorField(sub, v.data[(slice(None),) + sl])


def _header(domain: BoxDomain, ncomp: int) -> str:
    ext = " ".join(repr(e) for e in domain.extents)
    shp = " ".join(str(n) for n in domain.shape)
    return f"INCFIELD 1 {ext} {shp} {ncomp} {int(domain.periodic)} {domain.gamma_label()}\n"


def save_field(path, field: VectorField, fmt: str = "binary") -> None:
    """Write a nodal field as little-endian binary or as CSV (same header line)."""
    data = np.asarray(field.data, dtype="<f8")
    header = _header(field.domain, data.shape[0])
    path = Path(path)
    if fmt == "binary":
        with path.open("wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(data).tobytes())
    elif fmt == "csv":
        flat = data.reshape(data.shape[0], -1).T
        buf = io.StringIO()
        np.savetxt(buf, flat, delimiter=",", fmt="%.17g")
        path.write_text("# " + header + buf.getvalue(), encoding="utf-8", newline="\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _parse_header(line: str) -> tuple[BoxDomain, int]:
    parts = line.split()
    if parts[:2] != ["INCFIELD", "1"]:
        raise ValueError("not an INCFIELD v1 file")
    ext = tuple(float(x) for x in parts[2:5])
    shape = tuple(int(x) for x in parts[5:8])
    ncomp = int(parts[8])
    periodic = bool(int(parts[9]))
    gamma = BoxDomain.parse_gamma(parts[10])
    return BoxDomain(ext, shape, gamma, periodic), ncomp


def load_field(path) -> VectorField:
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(b"# "):
        text = raw.decode("utf-8")
        first, rest = text.split("\n", 1)
        domain, ncomp = _parse_header(first[2:])
        flat = np.loadtxt(io.StringIO(rest), delimiter=",", ndmin=2)
        data = flat.T.reshape((ncomp,) + domain.shape)
    else:
        first, payload = raw.split(b"\n", 1)
        domain, ncomp = _parse_header(first.decode("ascii"))
        data = np.frombuffer(payload, dtype="<f8").reshape((ncomp,) + domain.shape)
    return VectorField(domain, data)
