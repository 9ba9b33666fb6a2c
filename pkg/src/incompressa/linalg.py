"""Preconditioned conjugate gradients shared by the Poisson and saddle solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """An iteration hit its limit; ``history`` holds the residual norms."""

    def __init__(self, message: str, history: list[float] | None = None, last=None):
        super().__init__(message)
        self.history = list(history or [])
        self.last = last


class IndefiniteOperatorError(ArithmeticError):
    """CG met a direction of non-positive curvature."""


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)


def cg(
    apply_a: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    atol: float = 0.0,
    max_iter: int = 1000,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    inner: Callable[[np.ndarray, np.ndarray], float] | None = None,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> CGResult:
    """Solve ``A x = b`` for symmetric positive (semi)definite A.

    Stops when ``||r|| <= max(tol * ||b||, atol)``. ``project`` removes a
    known null space from residual and iterate (semidefinite systems).
    """
    dot = inner or (lambda u, v: float(np.vdot(u, v)))
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_a(x) if x0 is not None else b.copy()
    if project is not None:
        r = project(r)
    bnorm = np.sqrt(dot(b, b))
    target = max(tol * bnorm, atol)
    rnorm = np.sqrt(dot(r, r))
    history = [rnorm]
    if rnorm <= target:
        return CGResult(x, 0, rnorm, history)
    z = precond(r) if precond else r
    if project is not None:
        z = project(z)
    p = z.copy()
    rz = dot(r, z)
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        curv = dot(p, ap)
        if curv <= 0:
            if np.sqrt(dot(p, p)) == 0:
                break
            raise IndefiniteOperatorError(f"non-positive curvature {curv:.3e} at CG iteration {it}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * ap
        if project is not None:
            r = project(r)
        rnorm = np.sqrt(dot(r, r))
        history.append(rnorm)
        if rnorm <= target:
            if project is not None:
                x = project(x)
            return CGResult(x, it, rnorm, history)
        z = precond(r) if precond else r
        if project is not None:
            z = project(z)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations (residual {rnorm:.3e}, target {target:.3e})",
        history,
        x,
    )
