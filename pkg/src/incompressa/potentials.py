"""Divergence-free fields on the periodic box: Leray projection, curl inversion
and closed-form div-free velocities built as curls of potentials.

All discrete operators are the periodic central differences of
:mod:`incompressa.fields`; the Poisson operator is their composition
``div(grad .)`` so that projections are exactly divergence-free at the
discrete level.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import sympy as sp

from .fields import BoxDomain, FULL, PreconditionError, VectorField, curl, divergence, scalar_gradient
from .linalg import ConvergenceError, cg

__all__ = [
    "PeriodicField",
    "helmholtz_split",
    "leray_project",
    "curl_inverse",
    "make_analytic_divfree",
    "POTENTIALS",
]

PeriodicField = VectorField


def _require_periodic(v: VectorField) -> None:
    if not v.domain.periodic:
        raise PreconditionError("operation needs a periodic domain")


def _l2(domain: BoxDomain, a: np.ndarray) -> float:
    dv = float(np.prod(domain.spacing))
    return float(np.sqrt(dv * np.sum(a * a)))


def _laplacian(domain: BoxDomain):
    def apply(phi):
        return divergence(scalar_gradient(domain, phi))

    return apply


def _remove_mean(a: np.ndarray) -> np.ndarray:
    return a - a.mean()


def helmholtz_split(
    v: PeriodicField, tol: float = 1e-10, max_iter: int = 5000
) -> tuple[PeriodicField, np.ndarray]:
    """Return ``(u, phi)`` with ``v = u + grad phi`` and ``div u`` below ``tol * ||v||``."""
    _require_periodic(v)
    dom = v.domain
    rhs = divergence(v)
    vnorm = _l2(dom, v.data)
    lap = _laplacian(dom)
    # -lap is positive semidefinite; constants are its only smooth null modes
    try:
        res = cg(
            lambda p: -lap(p),
            -rhs,
            tol=0.0,
            atol=tol * vnorm / np.sqrt(np.prod(dom.spacing)),
            max_iter=max_iter,
            project=_remove_mean,
        )
    except ConvergenceError as exc:
        raise ConvergenceError(f"Leray projection: {exc}", exc.history) from None
    phi = res.x
    u = VectorField(dom, v.data - scalar_gradient(dom, phi).data)
    return u, phi


def leray_project(v: PeriodicField, tol: float = 1e-10, max_iter: int = 5000) -> PeriodicField:
    """L2-orthogonal projection onto discretely divergence-free fields."""
    return helmholtz_split(v, tol, max_iter)[0]


def curl_inverse(v: PeriodicField, tol: float = 1e-10, max_iter: int = 5000) -> PeriodicField:
    """Vector potential ``w`` with ``curl w = v`` and ``div w = 0``.

    Solves ``-lap w = curl v`` componentwise and checks
    ``||curl w - v|| <= 10 tol ||v||``.
    """
    _require_periodic(v)
    dom = v.domain
    vnorm = _l2(dom, v.data)
    if vnorm == 0.0:
        return VectorField.zeros(dom)
    mean = v.data.reshape(3, -1).mean(axis=1)
    if np.linalg.norm(mean) * np.sqrt(dom.volume) > tol * vnorm:
        raise PreconditionError("constant field is not a curl (nonzero mean)")
    if _l2(dom, divergence(v)) > tol * vnorm:
        raise PreconditionError("field is not divergence-free; project it first")
    lap = _laplacian(dom)
    rhs = curl(v).data
    scale = np.sqrt(np.prod(dom.spacing))
    comps = []
    for i in range(3):
        try:
            res = cg(
                lambda p: -lap(p),
                rhs[i],
                tol=0.0,
                atol=0.1 * tol * vnorm / scale,
                max_iter=max_iter,
                project=_remove_mean,
            )
        except ConvergenceError as exc:
            raise ConvergenceError(f"curl inverse, component {i}: {exc}", exc.history) from None
        comps.append(res.x)
    w = VectorField(dom, np.stack(comps))
    err = _l2(dom, curl(w).data - v.data)
    if err > 10 * tol * vnorm:
        raise ConvergenceError(f"curl of potential misses target by {err:.3e}")
    return w


# ---------------------------------------------------------------------------
# closed-form velocities
# ---------------------------------------------------------------------------

_X = sp.symbols("x1 x2 x3", real=True)
_PI = sp.pi


def _bump_poly():
    x, y, z = _X
    return (64 * x * (1 - x) * y * (1 - y) * z * (1 - z)) ** 2


POTENTIALS = {
    "zero": lambda: (0, 0, 0),
    # degree-2 trigonometric potential on the unit torus
    "trig2": lambda: (
        sp.sin(2 * _PI * _X[1]) * sp.sin(2 * _PI * _X[2]),
        sp.cos(2 * _PI * _X[0]) * sp.sin(4 * _PI * _X[2]),
        sp.sin(4 * _PI * _X[0]) * sp.cos(2 * _PI * _X[1]),
    ),
    # w = (0, 0, bump * x1); its curl vanishes on the unit box boundary
    "bump_x1": lambda: (0, 0, _bump_poly() * _X[0]),
    # w = s e3, s = sin^2(pi x1) sin^2(pi x2) sin^2(pi x3)
    "sin2box": lambda: (
        0,
        0,
        sp.sin(_PI * _X[0]) ** 2 * sp.sin(_PI * _X[1]) ** 2 * sp.sin(_PI * _X[2]) ** 2,
    ),
}

_ZERO_SETS = {"zero": FULL, "trig2": None, "bump_x1": FULL, "sin2box": FULL}


def _vectorize(fn, shape):
    def call(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = fn(pts[:, 0], pts[:, 1], pts[:, 2])
        arr = np.empty((pts.shape[0],) + shape)
        for idx in np.ndindex(*shape):
            entry = out
            for k in idx:
                entry = entry[k]
            arr[(slice(None),) + idx] = np.broadcast_to(np.asarray(entry, dtype=float), pts.shape[:1])
        return arr

    return call


def make_analytic_divfree(source: str | Sequence, scale: float = 1.0):
    """Velocity ``v = scale * curl w`` for a named or explicit potential.

    ``source`` is a key of :data:`POTENTIALS` or three expressions in
    ``x1, x2, x3`` (strings or sympy objects). The curl and its Jacobian
    are differentiated symbolically, so the divergence vanishes
    identically.
    """
    from .flow_recovery import AnalyticVelocity

    if isinstance(source, str):
        if source not in POTENTIALS:
            raise KeyError(f"unknown potential {source!r}")
        w = [sp.sympify(e) for e in POTENTIALS[source]()]
        name, zero_set = source, _ZERO_SETS[source]
    else:
        w = [sp.sympify(e, locals={"x1": _X[0], "x2": _X[1], "x3": _X[2]}) for e in source]
        name, zero_set = "custom", None
    x, y, z = _X
    v = [
        scale * (sp.diff(w[2], y) - sp.diff(w[1], z)),
        scale * (sp.diff(w[0], z) - sp.diff(w[2], x)),
        scale * (sp.diff(w[1], x) - sp.diff(w[0], y)),
    ]
    jac = [[sp.diff(vi, xj) for xj in _X] for vi in v]
    v_fn = _vectorize(sp.lambdify(_X, v, "numpy"), (3,))
    j_fn = _vectorize(sp.lambdify(_X, jac, "numpy"), (3, 3))
    return AnalyticVelocity(v_fn, j_fn, divergence_free=True, zero_set=zero_set, name=f"curl_of({name})")
