"""Volume-preserving recovery displacements from the flow of a div-free velocity.

For a C^1 velocity ``v`` with ``div v = 0`` the flow ``y' = v(y)``,
``y(0) = x`` has gradient ``Z`` solving ``Z' = grad v(y) Z``, ``Z(0) = I``,
hence ``det Z(t) = exp(int_0^t div v) = 1``. The displacement
``v_h = (y(h, .) - id) / h`` therefore satisfies ``det(I + h grad v_h) = 1``
exactly, vanishes wherever ``v`` does, and tends to ``v`` as ``h -> 0``.

``y`` and ``Z`` are integrated jointly with fixed-step classical RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import BoxDomain, TensorField, VectorField, gradient, integrate, norm_w1p

__all__ = [
    "AnalyticVelocity",
    "FlowState",
    "RecoveryResult",
    "RecoveryStudy",
    "FlowExitError",
    "integrate_flow",
    "recover",
    "verify_properties",
    "velocity_library",
]


class FlowExitError(RuntimeError):
    """A trajectory left the region where the velocity is defined."""


@dataclass(frozen=True)
class AnalyticVelocity:
    """Vectorized velocity ``v(points) -> (N, 3)`` and Jacobian ``jac(points) -> (N, 3, 3)``.

    ``jac[n, i, j] = d v_i / d x_j``. ``bounds`` is the box ``(lo, hi)`` on
    which ``v`` may be evaluated (``None``: all of R^3). ``zero_set`` names
    the Dirichlet marker of a sampling box on which ``v`` vanishes.
    """

    v: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    divergence_free: bool = True
    zero_set: object = None
    bounds: tuple | None = None
    name: str = "velocity"

    def __call__(self, points) -> np.ndarray:
        return self.v(np.atleast_2d(points))

    def sampled_divergence(self, points) -> np.ndarray:
        return np.trace(self.jac(np.atleast_2d(points)), axis1=1, axis2=2)

    def with_bounds(self, lo, hi) -> "AnalyticVelocity":
        return AnalyticVelocity(
            self.v, self.jac, self.divergence_free, self.zero_set, (np.asarray(lo, float), np.asarray(hi, float)), self.name
        )


@dataclass
class FlowState:
    y: np.ndarray  # (N, 3)
    Z: np.ndarray  # (N, 3, 3)
    t: float

    def det(self) -> np.ndarray:
        return np.linalg.det(self.Z)


@dataclass
class RecoveryResult:
    h: float
    v_h: VectorField
    det_error_flow: float  # max |det Z - 1| on the integrated gradient
    det_error_discrete: float  # max |det(I + h D v_h) - 1| with difference gradients
    dist_w1p: float  # ||v_h - v||_{W^{1,p}}, exact gradients
    dist_linf: float
    h_grad_inf: float  # ||h grad v_h||_inf
    gamma_residual: float | None  # max |v_h| on the zero set, None when not applicable
    p: float = 2.0

    def row(self) -> dict:
        return {
            "h": self.h,
            "det_error_flow": self.det_error_flow,
            "det_error_discrete": self.det_error_discrete,
            "dist_w1p": self.dist_w1p,
            "dist_linf": self.dist_linf,
            "h_grad_inf": self.h_grad_inf,
            "gamma_residual": "n/a" if self.gamma_residual is None else self.gamma_residual,
        }


@dataclass
class RecoveryStudy:
    results: list[RecoveryResult]
    checks: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.results)

    def __len__(self):
        return len(self.results)

    def __getitem__(self, i):
        return self.results[i]


def _check_inside(v: AnalyticVelocity, pts: np.ndarray, node_ids: np.ndarray | None = None) -> None:
    if v.bounds is None:
        return
    lo, hi = v.bounds
    bad = np.any((pts < lo) | (pts > hi), axis=1)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        node = k if node_ids is None else node_ids[k]
        raise FlowExitError(f"trajectory from node {node} left the velocity domain at {pts[k]}")


def integrate_flow(v: AnalyticVelocity, x, h: float, steps: int = 64, node_ids=None) -> FlowState:
    """RK4 for ``(y, Z)`` from ``t = 0`` to ``t = h`` in ``steps`` equal steps."""
    if h <= 0:
        raise ValueError("h must be positive")
    if steps < 1:
        raise ValueError("steps must be at least 1")
    y = np.array(np.atleast_2d(x), dtype=float)
    Z = np.broadcast_to(np.eye(3), (y.shape[0], 3, 3)).copy()
    dt = h / steps

    def rhs(yy, ZZ):
        _check_inside(v, yy, node_ids)
        return v.v(yy), v.jac(yy) @ ZZ

    for _ in range(steps):
        k1y, k1z = rhs(y, Z)
        k2y, k2z = rhs(y + 0.5 * dt * k1y, Z + 0.5 * dt * k1z)
        k3y, k3z = rhs(y + 0.5 * dt * k2y, Z + 0.5 * dt * k2z)
        k4y, k4z = rhs(y + dt * k3y, Z + dt * k3z)
        y = y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        Z = Z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
    _check_inside(v, y, node_ids)
    return FlowState(y, Z, h)


def _zero_set_mask(v: AnalyticVelocity, domain: BoxDomain) -> np.ndarray | None:
    if v.zero_set is None or domain.periodic:
        return None
    return domain.with_gamma(v.zero_set).gamma_mask()


def recover(v: AnalyticVelocity, h: float, domain: BoxDomain, steps: int = 64, p: float = 2.0) -> RecoveryResult:
    """Sample ``v_h = (y(h, x) - x) / h`` at the nodes of ``domain``."""
    X = domain.coords().reshape(3, -1).T
    state = integrate_flow(v, X, h, steps, node_ids=np.arange(X.shape[0]))
    vh = VectorField(domain, ((state.y - X) / h).T.reshape((3,) + domain.shape))
    v0 = VectorField(domain, v.v(X).T.reshape((3,) + domain.shape))

    det_flow = float(np.max(np.abs(state.det() - 1.0)))
    gd = gradient(vh).pointwise()
    det_disc = float(np.max(np.abs(np.linalg.det(np.eye(3) + h * gd) - 1.0)))

    grad_vh = (state.Z - np.eye(3)) / h
    grad_diff = np.moveaxis(grad_vh - v.jac(X), 0, -1).reshape((3, 3) + domain.shape)
    diff = vh - v0
    dist = norm_w1p(diff, p, grad=TensorField(domain, grad_diff))
    dist_inf = float(np.max(diff.magnitude()))
    h_grad_inf = float(np.max(np.sqrt(np.sum((state.Z - np.eye(3)) ** 2, axis=(1, 2)))))

    mask = _zero_set_mask(v, domain)
    gamma_res = None if mask is None else float(np.max(vh.magnitude()[mask], initial=0.0))
    return RecoveryResult(h, vh, det_flow, det_disc, dist, dist_inf, h_grad_inf, gamma_res, p)


def w1inf_norm(v: AnalyticVelocity, domain: BoxDomain) -> float:
    """``sup |v| + sup |grad v|`` sampled on the nodes."""
    X = domain.coords().reshape(3, -1).T
    return float(np.max(np.linalg.norm(v.v(X), axis=1)) + np.max(np.linalg.norm(v.jac(X), axis=(1, 2))))


def verify_properties(
    v: AnalyticVelocity,
    h_list: Sequence[float],
    domain: BoxDomain,
    steps: int = 64,
    p: float = 2.0,
    det_tol: float = 1e-8,
    gamma_tol: float = 1e-12,
) -> RecoveryStudy:
    """Run :func:`recover` for each h and evaluate the four recovery properties."""
    results = [recover(v, h, domain, steps, p) for h in h_list]
    hs = np.array([r.h for r in results])
    dist = np.array([r.dist_w1p for r in results])
    hg = np.array([r.h_grad_inf for r in results])
    order = np.argsort(-hs)

    def decreasing(a):
        a = a[order]
        return bool(np.all(a == 0) or np.all(np.diff(a) < 0))

    n1 = w1inf_norm(v, domain)
    c_v = n1 * np.exp(n1)
    checks = {
        "det_preserved": all(r.det_error_flow <= det_tol for r in results),
        "gamma_fixed": "not applicable"
        if results[0].gamma_residual is None
        else all(r.gamma_residual <= gamma_tol for r in results),
        "w1p_decreasing": decreasing(dist),
        "h_grad_decreasing": decreasing(hg),
        "gronwall_bound": all(r.dist_linf <= c_v * n1 * r.h + 1e-14 for r in results),
        "gronwall_constant": c_v,
    }
    if len(results) >= 2 and np.all(dist > 0):
        checks["w1p_slope"] = float(np.polyfit(np.log(hs), np.log(dist), 1)[0])
    return RecoveryStudy(results, checks)


# ---------------------------------------------------------------------------
# named velocities
# ---------------------------------------------------------------------------


def _linear(M: np.ndarray, center=None, name="linear", zero_set=None) -> AnalyticVelocity:
    M = np.asarray(M, dtype=float)
    c = np.zeros(3) if center is None else np.asarray(center, dtype=float)

    def vel(pts):
        return (np.atleast_2d(pts) - c) @ M.T

    def jac(pts):
        return np.broadcast_to(M, (np.atleast_2d(pts).shape[0], 3, 3)).copy()

    return AnalyticVelocity(vel, jac, bool(abs(np.trace(M)) < 1e-14), zero_set, None, name)


def velocity_library(name: str, **params) -> AnalyticVelocity:
    """Named velocities: ``zero``, ``rigid``, ``shear``, ``abc``, ``curl_of``.

    ``rigid(omega=(0,0,1), center=None)``: ``omega x (x - center)``;
    ``shear(axes=(0, 1), rate=1)``: ``v_i = rate * x_j``;
    ``abc(A=1, B=1, C=1)``: Arnold-Beltrami-Childress flow on the
    2pi-periodic box; ``curl_of(potential=..., scale=1)``.
    """
    if name == "zero":
        from .fields import FULL

        return _linear(np.zeros((3, 3)), name="zero", zero_set=FULL)
    if name == "rigid":
        w = np.asarray(params.get("omega", (0.0, 0.0, 1.0)), dtype=float)
        W = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
        return _linear(W, params.get("center"), name="rigid")
    if name == "shear":
        i, j = params.get("axes", (0, 1))
        if i == j:
            raise ValueError("shear needs two distinct axes")
        M = np.zeros((3, 3))
        M[i, j] = float(params.get("rate", 1.0))
        return _linear(M, name="shear")
    if name == "abc":
        A = float(params.get("A", 1.0))
        B = float(params.get("B", 1.0))
        C = float(params.get("C", 1.0))

        def vel(pts):
            x, y, z = np.atleast_2d(pts).T
            return np.stack([A * np.sin(z) + C * np.cos(y), B * np.sin(x) + A * np.cos(z), C * np.sin(y) + B * np.cos(x)], 1)

        def jac(pts):
            x, y, z = np.atleast_2d(pts).T
            J = np.zeros((x.size, 3, 3))
            J[:, 0, 1] = -C * np.sin(y)
            J[:, 0, 2] = A * np.cos(z)
            J[:, 1, 0] = B * np.cos(x)
            J[:, 1, 2] = -A * np.sin(z)
            J[:, 2, 0] = -B * np.sin(x)
            J[:, 2, 1] = C * np.cos(y)
            return J

        return AnalyticVelocity(vel, jac, True, None, None, "abc")
    if name == "curl_of":
        from .potentials import make_analytic_divfree

        return make_analytic_divfree(params.get("potential", "trig2"), float(params.get("scale", 1.0)))
    raise KeyError(f"unknown velocity {name!r}")
