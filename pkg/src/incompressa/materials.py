"""Hyperelastic energy densities for rubber-like solids.

Every density has the isochoric-volumetric form

    W(F) = W_iso(J^{-1/3} F) + W_vol(J),    J = det F > 0,

with ``W_vol(t) = c (t^2 - 1 - 2 log t)``, and is extended by an explicit
:data:`INF` tag when ``det F <= 0``.

The vectorized kernels (``isochoric_energy``, ``isochoric_stress``,
``volumetric_energy``...) take the displacement gradient ``G = F - I``
rather than ``F``. Near the identity this avoids the cancellation in
``tr(F^T F) - 3`` and ``det F - 1``, which matters once energies are
rescaled by ``h^-2``.

Symmetric 3x3 tensors are stored as Mandel 6-vectors

    [S11, S22, S33, sqrt2*S23, sqrt2*S13, sqrt2*S12]

so that ``S:T`` equals the dot product of the 6-vectors. All modules use
this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "INF",
    "Infinite",
    "is_finite",
    "MaterialModel",
    "VolumetricModel",
    "ElasticityTensor",
    "CoercivityProfile",
    "CoercivityReport",
    "DomainError",
    "energy",
    "energy_incompressible",
    "stress",
    "hessian_at_identity",
    "quadratic_form",
    "gp",
    "distance_to_so3",
    "coercivity_check",
    "frame_indifference_check",
    "is_rotation",
    "det_positive",
    "to_mandel",
    "from_mandel",
]

SQRT2 = np.sqrt(2.0)
_MANDEL_INDEX = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


class DomainError(ValueError):
    """Argument outside the domain of a material function."""


class Infinite:
    """The ``+inf`` value of an extended-real energy.

    Comparisons work (it is larger than every float); arithmetic does not,
    so an infeasible energy can never silently enter a sum.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __gt__(self, other) -> bool:
        return not isinstance(other, Infinite)

    def __ge__(self, other) -> bool:
        return True

    def __lt__(self, other) -> bool:
        return False

    def __le__(self, other) -> bool:
        return isinstance(other, Infinite)

    def __eq__(self, other) -> bool:
        return isinstance(other, Infinite)

    def __hash__(self) -> int:
        return hash("incompressa.INF")


INF = Infinite()


def is_finite(value) -> bool:
    return not isinstance(value, Infinite)


# ---------------------------------------------------------------------------
# model types
# ---------------------------------------------------------------------------

_KINDS = ("neo_hookean", "mooney_rivlin", "ogden", "yeoh")


@dataclass(frozen=True)
class MaterialModel:
    """Isochoric part of a rubber-like energy density.

    Use the named constructors. Parameters per kind:

    * ``neo_hookean``: ``mu``; ``W_iso = mu (I1 - 3)``
    * ``mooney_rivlin``: ``mu = (mu1, mu2)``;
      ``W_iso = mu1/2 (I1 - 3) + mu2/2 (I2 - 3)``
    * ``ogden``: ``mu = (mu_1..mu_N)``, ``alpha = (alpha_1..alpha_N)``;
      ``W_iso = sum_p mu_p/alpha_p (sum_i lambda_i^alpha_p - 3)``
    * ``yeoh``: ``c = (c1, c2, c3)``; ``W_iso = sum_k c_k (I1 - 3)^k``

    Invariants are those of the isochoric right Cauchy-Green tensor.
    """

    kind: str
    mu: tuple[float, ...] = ()
    alpha: tuple[float, ...] = ()
    c: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown material kind {self.kind!r}")
        if self.kind == "neo_hookean":
            if len(self.mu) != 1 or self.mu[0] <= 0:
                raise ValueError("neo-Hookean needs one positive modulus")
        elif self.kind == "mooney_rivlin":
            if len(self.mu) != 2 or self.mu[0] <= 0 or self.mu[1] < 0:
                raise ValueError("Mooney-Rivlin needs mu1 > 0, mu2 >= 0")
        elif self.kind == "ogden":
            if len(self.mu) < 1 or len(self.mu) != len(self.alpha):
                raise ValueError("Ogden needs N >= 1 matching (mu_p, alpha_p)")
            for m, a in zip(self.mu, self.alpha):
                # mu_p alpha_p > 0 keeps every term convex at the identity
                if a == 0 or m * a <= 0:
                    raise ValueError("Ogden terms need mu_p * alpha_p > 0")
        elif self.kind == "yeoh":
            if len(self.c) != 3 or self.c[0] <= 0:
                raise ValueError("Yeoh needs (c1, c2, c3) with c1 > 0")

    @classmethod
    def neo_hookean(cls, mu: float) -> "MaterialModel":
        return cls("neo_hookean", mu=(float(mu),))

    @classmethod
    def mooney_rivlin(cls, mu1: float, mu2: float) -> "MaterialModel":
        return cls("mooney_rivlin", mu=(float(mu1), float(mu2)))

    @classmethod
    def ogden(cls, mu_p: Sequence[float], alpha_p: Sequence[float]) -> "MaterialModel":
        return cls("ogden", mu=tuple(map(float, mu_p)), alpha=tuple(map(float, alpha_p)))

    @classmethod
    def yeoh(cls, c1: float, c2: float = 0.0, c3: float = 0.0) -> "MaterialModel":
        return cls("yeoh", c=(float(c1), float(c2), float(c3)))

    @classmethod
    def from_config(cls, table: Mapping[str, object]) -> "MaterialModel":
        """Build a model from config keys ``model, mu, mu_p, alpha_p, c1..c3``."""
        kind = str(table["model"]).lower().replace("-", "_")
        aliases = {"neohookean": "neo_hookean", "mooneyrivlin": "mooney_rivlin"}
        kind = aliases.get(kind, kind)
        if kind == "neo_hookean":
            return cls.neo_hookean(_num(table["mu"]))
        if kind == "mooney_rivlin":
            mu = _nums(table["mu_p"]) if "mu_p" in table else _nums(table["mu"])
            return cls.mooney_rivlin(*mu)
        if kind == "ogden":
            return cls.ogden(_nums(table["mu_p"]), _nums(table["alpha_p"]))
        if kind == "yeoh":
            return cls.yeoh(*(_num(table.get(f"c{k}", 0.0)) for k in (1, 2, 3)))
        raise ValueError(f"unknown material kind {table['model']!r}")

    def as_ogden(self) -> "MaterialModel":
        """Equivalent Ogden model, when one exists."""
        if self.kind == "ogden":
            return self
        if self.kind == "neo_hookean":
            return MaterialModel.ogden([2 * self.mu[0]], [2.0])
        if self.kind == "mooney_rivlin":
            mu1, mu2 = self.mu
            if mu2 == 0:
                return MaterialModel.ogden([mu1], [2.0])
            return MaterialModel.ogden([mu1, -mu2], [2.0, -2.0])
        raise ValueError("Yeoh has no Ogden form")

    @property
    def shear_modulus(self) -> float:
        """Small-strain shear modulus: ``W_iso ~ shear_modulus * |dev E|^2``."""
        if self.kind == "neo_hookean":
            return 2.0 * self.mu[0]
        if self.kind == "mooney_rivlin":
            return self.mu[0] + self.mu[1]
        if self.kind == "ogden":
            return 0.5 * sum(m * a for m, a in zip(self.mu, self.alpha))
        return 2.0 * self.c[0]


@dataclass(frozen=True)
class VolumetricModel:
    """``W_vol(t) = c (t^2 - 1 - 2 log t)``."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("volumetric coefficient must be positive")

    def __call__(self, t: float) -> float:
        if t <= 0:
            raise DomainError("volumetric energy needs t > 0")
        return float(volumetric_energy(self.c, np.asarray(t - 1.0)))

    def derivative(self, t: float) -> float:
        return float(volumetric_derivative(self.c, np.asarray(t - 1.0)))


@dataclass(frozen=True)
class ElasticityTensor:
    """The quadratic form ``B -> sym B : D^2 W(I) : sym B`` as a 6x6 Mandel matrix."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (6, 6):
            raise ValueError("elasticity tensor must be 6x6")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def isotropic(cls, shear_modulus: float, volumetric_stiffness: float) -> "ElasticityTensor":
        """``Q(E) = 2 G |dev E|^2 + k (tr E)^2``."""
        one = np.zeros(6)
        one[:3] = 1.0
        p_dev = np.eye(6) - np.outer(one, one) / 3.0
        return cls(2.0 * shear_modulus * p_dev + volumetric_stiffness * np.outer(one, one))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[0])

    def apply(self, eps: np.ndarray) -> np.ndarray:
        """Stress ``H : E`` for symmetric tensors of shape (..., 3, 3)."""
        return from_mandel(to_mandel(eps) @ self.matrix.T)


@dataclass(frozen=True)
class CoercivityProfile:
    p: float
    C: float

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise ValueError("p must lie in (1, 2]")
        if not self.C > 0:
            raise ValueError("C must be positive")


@dataclass
class CoercivityReport:
    margins: np.ndarray
    violations: list[int]

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins)) if len(self.margins) else 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def _num(value) -> float:
    return float(value)


def _nums(value) -> list[float]:
    if isinstance(value, str):
        return [float(s) for s in value.replace(",", " ").split()]
    if isinstance(value, Iterable):
        return [float(v) for v in value]
    return [float(value)]


# ---------------------------------------------------------------------------
# Mandel helpers
# ---------------------------------------------------------------------------


def to_mandel(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    sym = 0.5 * (s + np.swapaxes(s, -1, -2))
    return np.stack(
        [
            sym[..., 0, 0],
            sym[..., 1, 1],
            sym[..., 2, 2],
            SQRT2 * sym[..., 1, 2],
            SQRT2 * sym[..., 0, 2],
            SQRT2 * sym[..., 0, 1],
        ],
        axis=-1,
    )


def from_mandel(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(_MANDEL_INDEX):
        v = m[..., k] if k < 3 else m[..., k] / SQRT2
        out[..., i, j] = v
        out[..., j, i] = v
    return out


# ---------------------------------------------------------------------------
# vectorized kernels on displacement gradients G = F - I
# ---------------------------------------------------------------------------


def _det_minus_one(G: np.ndarray) -> np.ndarray:
    """``det(I + G) - 1`` expanded in the invariants of G (no cancellation)."""
    tr = np.trace(G, axis1=-2, axis2=-1)
    tr2 = np.einsum("...ij,...ji->...", G, G)
    return tr + 0.5 * (tr * tr - tr2) + np.linalg.det(G)


def _x_minus_log1p(x: np.ndarray) -> np.ndarray:
    """``x - log(1 + x)`` accurate for small |x|."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, x, 0.0)
    series = xs * xs * (0.5 - xs * (1 / 3 - xs * (0.25 - xs * (0.2 - xs * (1 / 6 - xs / 7)))))
    direct = x - np.log1p(np.where(small, 0.0, x))
    return np.where(small, series, direct)


def volumetric_energy(c: float, j: np.ndarray) -> np.ndarray:
    """``c (J^2 - 1 - 2 log J)`` as a function of ``j = J - 1``."""
    j = np.asarray(j, dtype=float)
    return c * (2.0 * _x_minus_log1p(j) + j * j)


def volumetric_derivative(c: float, j: np.ndarray) -> np.ndarray:
    """``d/dJ W_vol = 2c (J^2 - 1)/J``."""
    j = np.asarray(j, dtype=float)
    return 2.0 * c * j * (2.0 + j) / (1.0 + j)


def _cofactor(F: np.ndarray) -> np.ndarray:
    """``det(F) F^{-T}`` computed without division."""
    c = np.empty_like(F)
    c[..., 0, 0] = F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1]
    c[..., 0, 1] = F[..., 1, 2] * F[..., 2, 0] - F[..., 1, 0] * F[..., 2, 2]
    c[..., 0, 2] = F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]
    c[..., 1, 0] = F[..., 0, 2] * F[..., 2, 1] - F[..., 0, 1] * F[..., 2, 2]
    c[..., 1, 1] = F[..., 0, 0] * F[..., 2, 2] - F[..., 0, 2] * F[..., 2, 0]
    c[..., 1, 2] = F[..., 0, 1] * F[..., 2, 0] - F[..., 0, 0] * F[..., 2, 1]
    c[..., 2, 0] = F[..., 0, 1] * F[..., 1, 2] - F[..., 0, 2] * F[..., 1, 1]
    c[..., 2, 1] = F[..., 0, 2] * F[..., 1, 0] - F[..., 0, 0] * F[..., 1, 2]
    c[..., 2, 2] = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return c


class _Kinematics:
    """Shared invariants of ``F = I + G`` (requires det F > 0)."""

    def __init__(self, G: np.ndarray):
        G = np.asarray(G, dtype=float)
        self.G = G
        self.F = G + np.eye(3)
        self.j = _det_minus_one(G)
        self.log_j = np.log1p(self.j)
        # 2 * Green strain = C - I
        self.E2 = G + np.swapaxes(G, -1, -2) + np.einsum("...ki,...kj->...ij", G, G)
        self.d1 = np.trace(self.E2, axis1=-2, axis2=-1)  # tr C - 3
        self._finv_t = None

    @property
    def finv_t(self) -> np.ndarray:
        if self._finv_t is None:
            self._finv_t = _cofactor(self.F) / (1.0 + self.j)[..., None, None]
        return self._finv_t

    def i1_bar_minus_3(self) -> np.ndarray:
        s = np.expm1(-2.0 / 3.0 * self.log_j)
        return s * (3.0 + self.d1) + self.d1

    def i2_bar_minus_3(self) -> np.ndarray:
        e2sq = np.einsum("...ij,...ij->...", self.E2, self.E2)
        d2 = 2.0 * self.d1 + 0.5 * (self.d1**2 - e2sq)
        s = np.expm1(-4.0 / 3.0 * self.log_j)
        return s * (3.0 + d2) + d2

    def d_i1_bar(self) -> np.ndarray:
        jm = np.exp(-2.0 / 3.0 * self.log_j)[..., None, None]
        trc = (3.0 + self.d1)[..., None, None]
        return jm * (2.0 * self.F - 2.0 / 3.0 * trc * self.finv_t)

    def d_i2_bar(self) -> np.ndarray:
        C = self.E2 + np.eye(3)
        trc = (3.0 + self.d1)[..., None, None]
        i2c = 0.5 * (trc[..., 0, 0] ** 2 - np.einsum("...ij,...ij->...", C, C))
        jm = np.exp(-4.0 / 3.0 * self.log_j)[..., None, None]
        dc = trc * np.eye(3) - C
        return jm * (2.0 * self.F @ dc - 4.0 / 3.0 * i2c[..., None, None] * self.finv_t)


def _ogden_terms(model: MaterialModel, kin: _Kinematics):
    e, n = np.linalg.eigh(kin.E2)  # C = I + E2 shares eigenvectors
    log_c = np.log1p(e)
    w = np.zeros(kin.j.shape)
    dphi = np.zeros(e.shape)
    for mu, a in zip(model.mu, model.alpha):
        expo = 0.5 * a * log_c - a / 3.0 * kin.log_j[..., None]
        w = w + mu / a * np.sum(np.expm1(expo), axis=-1)
        lam = np.exp(expo)
        dphi = dphi + mu * (0.5 * lam - np.sum(lam, axis=-1, keepdims=True) / 6.0)
    dphi = dphi / np.exp(log_c)
    dW_dC = np.einsum("...ik,...k,...jk->...ij", n, dphi, n)
    return w, dW_dC


def isochoric_energy(model: MaterialModel, G: np.ndarray) -> np.ndarray:
    """``W_iso(J^{-1/3} (I + G))``, vectorized over leading axes."""
    kin = G if isinstance(G, _Kinematics) else _Kinematics(G)
    if model.kind == "neo_hookean":
        return model.mu[0] * kin.i1_bar_minus_3()
    if model.kind == "mooney_rivlin":
        mu1, mu2 = model.mu
        return 0.5 * mu1 * kin.i1_bar_minus_3() + 0.5 * mu2 * kin.i2_bar_minus_3()
    if model.kind == "yeoh":
        x = kin.i1_bar_minus_3()
        c1, c2, c3 = model.c
        return x * (c1 + x * (c2 + x * c3))
    return _ogden_terms(model, kin)[0]


def isochoric_stress(model: MaterialModel, G: np.ndarray) -> np.ndarray:
    """Derivative of :func:`isochoric_energy` with respect to F."""
    kin = G if isinstance(G, _Kinematics) else _Kinematics(G)
    if model.kind == "neo_hookean":
        return model.mu[0] * kin.d_i1_bar()
    if model.kind == "mooney_rivlin":
        mu1, mu2 = model.mu
        return 0.5 * mu1 * kin.d_i1_bar() + 0.5 * mu2 * kin.d_i2_bar()
    if model.kind == "yeoh":
        x = kin.i1_bar_minus_3()
        c1, c2, c3 = model.c
        slope = c1 + x * (2 * c2 + 3 * c3 * x)
        return slope[..., None, None] * kin.d_i1_bar()
    dW_dC = _ogden_terms(model, kin)[1]
    return 2.0 * kin.F @ dW_dC


def energy_density(model: MaterialModel, vol: VolumetricModel, G: np.ndarray) -> np.ndarray:
    """Vectorized ``W(I + G)``; entries with ``det <= 0`` are ``nan``."""
    G = np.asarray(G, dtype=float)
    j = _det_minus_one(G)
    ok = j > -1.0
    Gs = np.where(ok[..., None, None], G, 0.0)
    kin = _Kinematics(Gs)
    w = isochoric_energy(model, kin) + volumetric_energy(vol.c, kin.j)
    return np.where(ok, w, np.nan)


def stress_density(model: MaterialModel, vol: VolumetricModel, G: np.ndarray) -> np.ndarray:
    """Vectorized ``DW(I + G)``; caller guarantees ``det > 0``."""
    kin = _Kinematics(G)
    dvol = volumetric_derivative(vol.c, kin.j)
    cof = _cofactor(kin.F)
    return isochoric_stress(model, kin) + dvol[..., None, None] * cof


# ---------------------------------------------------------------------------
# public point-wise operations
# ---------------------------------------------------------------------------


def _matrix(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {F.shape}")
    if not np.all(np.isfinite(F)):
        raise ValueError("matrix entries must be finite")
    return F


def det_positive(F) -> bool:
    return bool(np.linalg.det(_matrix(F)) > 0)


def is_rotation(F, tol: float = 1e-12) -> bool:
    F = _matrix(F)
    return bool(
        np.max(np.abs(F.T @ F - np.eye(3))) <= tol and abs(np.linalg.det(F) - 1.0) <= tol
    )


def energy(model: MaterialModel, vol: VolumetricModel, F):
    """``W(F)``, or :data:`INF` when ``det F <= 0``."""
    G = _matrix(F) - np.eye(3)
    if _det_minus_one(G) <= -1.0:
        return INF
    return float(energy_density(model, vol, G))


def energy_incompressible(model: MaterialModel, vol: VolumetricModel, F, det_tol: float = 0.0):
    """``W^I(F)``: finite only when ``|det F - 1| <= det_tol``."""
    if det_tol < 0:
        raise DomainError("det_tol must be nonnegative")
    G = _matrix(F) - np.eye(3)
    if abs(_det_minus_one(G)) > det_tol:
        return INF
    return energy(model, vol, F)


def stress(model: MaterialModel, vol: VolumetricModel, F) -> np.ndarray:
    """First Piola stress ``DW(F)``.

    NeoHookean: ``mu J^{-2/3} (2F - 2/3 tr C F^{-T})``; Mooney-Rivlin adds
    the analogous ``I2`` term; Yeoh scales the NeoHookean derivative by
    ``sum_k k c_k (I1 - 3)^{k-1}``; Ogden uses ``2F dW/dC`` with
    ``dW/dC = sum_i dphi/dc_i n_i n_i^T`` over the eigenpairs of C. The
    volumetric part is ``W_vol'(J) cof F``.
    """
    G = _matrix(F) - np.eye(3)
    if _det_minus_one(G) <= -1.0:
        raise DomainError("stress needs det F > 0")
    return stress_density(model, vol, G)


def _mandel_basis() -> list[np.ndarray]:
    basis = []
    for k, (i, j) in enumerate(_MANDEL_INDEX):
        b = np.zeros((3, 3))
        if i == j:
            b[i, i] = 1.0
        else:
            b[i, j] = b[j, i] = 1.0 / SQRT2
        basis.append(b)
    return basis


def _second_difference(model, vol, B: np.ndarray, step: float) -> float:
    def d2(s):
        wp = float(energy_density(model, vol, s * B))
        wm = float(energy_density(model, vol, -s * B))
        return (wp + wm) / (s * s)  # W(I) = 0

    # one Richardson level removes the O(step^2) term
    return (4.0 * d2(step / 2) - d2(step)) / 3.0


def hessian_at_identity(
    model: MaterialModel, vol: VolumetricModel, method: str = "analytic", step: float = 1e-4
) -> ElasticityTensor:
    """Second derivative of W at the identity, restricted to symmetric matrices.

    The analytic form uses ``Q(E) = 2 G |dev E|^2 + 4 c (tr E)^2`` where G
    is the small-strain shear modulus of the isochoric part and ``4c`` is
    ``W_vol''(1)``. ``method="fd"`` rebuilds the matrix from second
    differences of :func:`energy` with Richardson extrapolation.
    """
    if method == "analytic":
        return ElasticityTensor.isotropic(model.shear_modulus, 4.0 * vol.c)
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    basis = _mandel_basis()
    H = np.empty((6, 6))
    diag = [_second_difference(model, vol, b, step) for b in basis]
    for a in range(6):
        H[a, a] = diag[a]
        for b in range(a + 1, 6):
            q = _second_difference(model, vol, basis[a] + basis[b], step)
            H[a, b] = H[b, a] = 0.5 * (q - diag[a] - diag[b])
    return ElasticityTensor(H)


def quadratic_form(H: ElasticityTensor, B) -> float:
    """``sym B : H : sym B`` (no factor 1/2)."""
    m = to_mandel(np.asarray(B, dtype=float))
    return float(m @ H.matrix @ m)


def gp(p: float, t: float) -> float:
    """Coercivity gauge: ``t^2`` on [0, 1], ``2 t^p / p - 2/p + 1`` beyond."""
    if not 1.0 < p <= 2.0:
        raise DomainError("p must lie in (1, 2]")
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t <= 1.0:
        return t * t
    return 2.0 * t**p / p - 2.0 / p + 1.0


def distance_to_so3(F) -> float:
    """Frobenius distance from F to the rotation group.

    With singular values ``s1 >= s2 >= s3`` the nearest rotation is the
    polar factor when det F > 0, giving ``sum (s_i - 1)^2``; for det F <= 0
    the smallest singular direction has to flip, giving
    ``(s1 - 1)^2 + (s2 - 1)^2 + (s3 + 1)^2``.
    """
    F = _matrix(F)
    s = np.linalg.svd(F, compute_uv=False)
    if np.linalg.det(F) > 0:
        return float(np.sqrt(np.sum((s - 1.0) ** 2)))
    return float(np.sqrt((s[0] - 1) ** 2 + (s[1] - 1) ** 2 + (s[2] + 1) ** 2))


def coercivity_check(
    model: MaterialModel,
    vol: VolumetricModel,
    profile: CoercivityProfile,
    samples: Iterable,
    tol: float = 1e-12,
) -> CoercivityReport:
    """Margins ``W(F) - C g_p(d(F, SO(3)))`` over the samples."""
    margins = []
    for F in samples:
        if not det_positive(F):
            raise DomainError("coercivity samples must have det > 0")
        w = energy(model, vol, F)
        margins.append(w - profile.C * gp(profile.p, distance_to_so3(F)))
    margins = np.asarray(margins, dtype=float)
    violations = [int(i) for i in np.flatnonzero(margins < -tol)]
    return CoercivityReport(margins, violations)


def frame_indifference_check(model: MaterialModel, vol: VolumetricModel, F, R) -> float:
    """``|W(R F) - W(F)|`` for a rotation R."""
    F = _matrix(F)
    R = _matrix(R)
    if not is_rotation(R, tol=1e-12):
        raise DomainError("R must be a rotation")
    if not det_positive(F):
        raise DomainError("F must have det > 0")
    return abs(energy(model, vol, R @ F) - energy(model, vol, F))
