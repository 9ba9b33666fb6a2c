"""The linearized incompressible problem and its saddle-point solver.

Discretization: trilinear displacements on the nodes, strains at the
2x2x2 Gauss points with the volumetric part replaced by its cell average
(the "B-bar" split), piecewise-constant pressures. The constraint is
``div v = 0`` in every cell, i.e. zero net flux through each cell.

With ``B v = -V div_cell v`` and the optional pressure stabilization
``C = (beta / G) sum_faces V [p][q]`` the discrete optimality system is

    A v + B^T q = f        (free nodes)
    B v - C q   = 0

so ``q`` is the physical pressure in ``-div(H : E(v)) + grad q = f``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from ..fields import FULL, BoxDomain, VectorField, quadrature_weights
from ..linalg import ConvergenceError, IndefiniteOperatorError, cg
from ..materials import INF, ElasticityTensor, from_mandel, to_mandel
from .q1 import FastLaplacian, Q1Grid

__all__ = [
    "shear_scale",
    "saddle_solve",
    "LinearizedProblem",
    "SaddleSolution",
    "LinearOperators",
    "load_functional",
    "linearized_energy",
    "solve_linearized",
    "solve_shifted",
]

_ONE = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


def shear_scale(m: np.ndarray) -> float:
    """Representative shear stiffness: half the smallest eigenvalue on trace-free strains."""
    m = np.asarray(m, dtype=float).reshape(-1, 6, 6)
    basis = np.linalg.qr(np.eye(6) - np.outer(_ONE, _ONE) / 3.0)[0][:, :5]
    dev = np.einsum("ai,nab,bj->nij", basis, m, basis)
    return 0.5 * float(np.min(np.linalg.eigvalsh(dev)))


def load_functional(f: VectorField, v: VectorField) -> float:
    """``L(v) = int f . v`` by the trapezoidal rule on the nodes."""
    w = quadrature_weights(f.domain)
    return float(np.sum(w * np.sum(f.data * v.data, axis=0)))


@dataclass
class LinearizedProblem:
    """Quadratic energy ``1/2 int E(v):H:E(v) - L(v)`` over div-free ``v`` with ``v = vbar`` on Gamma.

    ``tensor`` is one :class:`ElasticityTensor` or a per-cell array of
    Mandel matrices with shape ``cell_shape + (6, 6)``.
    """

    domain: BoxDomain
    tensor: object
    load: VectorField | None = None
    vbar: VectorField | None = None
    beta: float = 0.1
    feasibility_tol: float = 1e-6

    def __post_init__(self):
        if self.domain.periodic or self.domain.gamma is None:
            raise ValueError("the linearized problem needs a bounded box with a Dirichlet part")
        mats = self.matrices()
        eig = np.linalg.eigvalsh(mats.reshape(-1, 6, 6) if mats.ndim > 2 else mats)
        if np.min(eig) <= 0:
            raise IndefiniteOperatorError(
                f"elasticity tensor is not positive definite (smallest eigenvalue {np.min(eig):.3e})"
            )
        if self.load is None:
            self.load = VectorField.zeros(self.domain)
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.vbar is not None:
            div = Q1Grid(self.domain).cell_divergence(self.vbar.data)
            if np.sqrt(np.sum(div**2) * np.prod(self.domain.spacing)) > self.feasibility_tol:
                raise ValueError("boundary displacement must be divergence-free")

    def matrices(self) -> np.ndarray:
        t = self.tensor
        m = t.matrix if isinstance(t, ElasticityTensor) else np.asarray(t, dtype=float)
        if m.shape != (6, 6) and m.shape != self.domain.cell_shape + (6, 6):
            raise ValueError(f"tensor has shape {m.shape}")
        return m

    @property
    def shear_scale(self) -> float:
        return shear_scale(self.matrices())

    def lift(self) -> np.ndarray:
        if self.vbar is None:
            return np.zeros((3,) + self.domain.shape)
        return np.array(self.vbar.data)

    def with_(self, **changes) -> "LinearizedProblem":
        kw = dict(
            domain=self.domain,
            tensor=self.tensor,
            load=self.load,
            vbar=self.vbar,
            beta=self.beta,
            feasibility_tol=self.feasibility_tol,
        )
        kw.update(changes)
        return LinearizedProblem(**kw)


@dataclass
class SaddleSolution:
    v: VectorField
    q: np.ndarray  # cell pressures
    momentum_residual: float
    continuity_residual: float
    divergence_norm: float
    iterations: int
    history: list[float] = field(default_factory=list)
    seconds: float = 0.0

    def report(self) -> dict:
        return {
            "momentum_residual": self.momentum_residual,
            "continuity_residual": self.continuity_residual,
            "divergence_norm": self.divergence_norm,
            "iterations": self.iterations,
        }


class LinearOperators:
    """Matrix-free operators on full nodal arrays.

    ``matrices`` is one 6x6 Mandel matrix or one per cell. The pressure
    block is ``C = beta * (stabilizing jump Laplacian) + compliance * V``.
    """

    def __init__(self, domain: BoxDomain, matrices, beta: float = 0.0, compliance: float = 0.0, shear=None):
        self.domain = domain
        self.grid = Q1Grid(domain)
        self.H = np.asarray(matrices, dtype=float)
        self.uniform = self.H.ndim == 2
        self.C9 = self._c9(self.H if self.uniform else self.H.reshape(-1, 6, 6))
        self.free = ~domain.gamma_mask()
        self.node_weights = quadrature_weights(domain)
        self.G = shear_scale(self.H) if shear is None else float(shear)
        self.V = self.grid.cell_volume
        self.beta = float(beta)
        self.compliance = float(compliance)

    @classmethod
    def of(cls, problem: LinearizedProblem) -> "LinearOperators":
        return cls(problem.domain, problem.matrices(), beta=problem.beta)

    # strains -------------------------------------------------------------
    @staticmethod
    def _c9(m: np.ndarray) -> np.ndarray:
        """Matrices acting on flattened gradients: ``S = H : sym(D)`` as ``(..., 9, 9)``."""
        basis = np.zeros((9, 3, 3))
        for k in range(9):
            basis[k].flat[k] = 1.0
        cols = from_mandel(to_mandel(basis) @ np.swapaxes(m, -1, -2))
        return np.swapaxes(cols.reshape(cols.shape[:-2] + (9,)), -1, -2)

    @staticmethod
    def bbar(D: np.ndarray) -> np.ndarray:
        """Replace the trace at each Gauss point by its cell mean (in place)."""
        tr = D[0, 0] + D[1, 1] + D[2, 2]
        corr = (tr.mean(0, keepdims=True) - tr) / 3.0
        for i in range(3):
            D[i, i] += corr
        return D

    def bbar_gradient(self, v: np.ndarray) -> np.ndarray:
        """Gauss-point gradients (component-first) with cell-averaged trace."""
        return self.bbar(self.grid.grad9(v))

    def _stress9(self, D: np.ndarray) -> np.ndarray:
        flat = D.reshape(9, 8, -1)
        if self.uniform:
            S = (self.C9 @ flat.reshape(9, -1)).reshape(flat.shape)
        else:
            S = np.einsum("nij,jgn->ign", self.C9, flat, optimize=True)
        return S.reshape(D.shape)

    def apply_A(self, v: np.ndarray) -> np.ndarray:
        S = self.bbar(self._stress9(self.bbar_gradient(v)))
        return self.grid.weight * self.grid.grad9_t(S)

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> float:
        """``int E(u):H:E(v)`` with the discrete strains."""
        return self.grid.weight * float(np.vdot(self.bbar_gradient(u), self._stress9(self.bbar_gradient(v))))

    def energy_density_sum(self, v: np.ndarray) -> float:
        """``1/2 int E:H:E`` (exact Gauss quadrature of the B-bar strain)."""
        D = self.bbar_gradient(v)
        return 0.5 * self.grid.weight * float(np.vdot(D, self._stress9(D)))

    # constraint ----------------------------------------------------------
    def apply_B(self, v: np.ndarray) -> np.ndarray:
        return -self.V * self.grid.cell_divergence(v)

    def apply_Bt(self, q: np.ndarray) -> np.ndarray:
        return -self.V * self.grid.cell_divergence_t(q)

    def apply_C(self, q: np.ndarray) -> np.ndarray:
        out = self.compliance * self.V * q
        if self.beta == 0.0:
            return out
        coef = self.beta * self.V / self.G
        for ax in range(3):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[ax] = slice(0, -1)
            hi[ax] = slice(1, None)
            jump = q[tuple(hi)] - q[tuple(lo)]
            out[tuple(hi)] += coef * jump
            out[tuple(lo)] -= coef * jump
        return out

    def pressure_scale(self) -> float:
        """Diagonal of the pressure preconditioner (per cell)."""
        return self.V * (1.0 / self.G + self.compliance)

    def div_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(self.V * np.sum(self.grid.cell_divergence(v) ** 2)))

    def force_norm(self, r: np.ndarray) -> float:
        """Mesh-independent norm of a nodal force vector (free nodes only)."""
        rf = np.where(self.free, r, 0.0)
        w = np.where(self.node_weights > 0, self.node_weights, 1.0)
        return float(np.sqrt(np.sum(rf**2 / w)))

    def cell_norm(self, rc: np.ndarray) -> float:
        return float(np.sqrt(np.sum(rc**2) / self.V))

    def pressure_gauge(self) -> bool:
        return self.domain.gamma == FULL and self.compliance == 0.0


def linearized_energy(problem: LinearizedProblem, v: VectorField, tol: float | None = None):
    """Discrete ``1/2 int E(v):H:E(v) - L(v)``; :data:`INF` when ``v`` is infeasible.

    Infeasible means ``||div_cell v||_2 > tol`` (default: the problem's
    feasibility tolerance) or Dirichlet data violated on Gamma.
    """
    tol = problem.feasibility_tol if tol is None else tol
    ops = LinearOperators.of(problem)
    if ops.div_norm(v.data) > tol:
        return INF
    if not v.satisfies_dirichlet(tol, VectorField(problem.domain, problem.lift())):
        return INF
    return ops.energy_density_sum(v.data) - load_functional(problem.load, v)


def saddle_solve(
    ops: LinearOperators,
    force: np.ndarray,
    v: np.ndarray,
    q: np.ndarray,
    tol: float,
    max_iter: int,
    method: str = "minres",
    lap: FastLaplacian | None = None,
):
    """Drive ``A v + B^T q = force`` (free nodes), ``B v - C q = 0`` to ``tol``.

    ``v`` carries the Dirichlet values on Gamma and is updated in place on
    free nodes, as is ``q``. Returns ``(momentum, continuity, iterations,
    history)``; raises :class:`ConvergenceError` when ``max_iter`` is hit.
    """
    dom = ops.domain
    free3 = np.broadcast_to(ops.free, (3,) + dom.shape)
    nv = int(free3.sum())
    cells = ops.grid.cells
    nq = int(np.prod(cells))
    lap = FastLaplacian(dom) if lap is None else lap
    G = ops.G
    pscale = ops.pressure_scale()
    gauge = ops.pressure_gauge()

    def full(vf):
        out = np.zeros((3,) + dom.shape)
        out[free3] = vf
        return out

    def p_apply(r):
        out = np.empty_like(r)
        out[:nv] = (lap.solve(full(r[:nv])) / G)[free3]
        out[nv:] = r[nv:] / pscale
        return out

    def k_apply(x):
        vv = full(x[:nv])
        qq = x[nv:].reshape(cells)
        top = ops.apply_A(vv) + ops.apply_Bt(qq)
        bot = ops.apply_B(vv) - ops.apply_C(qq)
        return np.concatenate([top[free3], bot.ravel()])

    history: list[float] = []
    iters = 0
    for _sweep in range(50):
        rm = force - ops.apply_A(v) - ops.apply_Bt(q)
        rc = ops.apply_C(q) - ops.apply_B(v)
        mres, cres = ops.force_norm(rm), ops.cell_norm(rc)
        history.append(max(mres, cres))
        if mres <= tol and cres <= tol:
            return mres, cres, iters, history
        if iters >= max_iter:
            break
        budget = max_iter - iters
        if method == "minres":
            counter = [0]

            def cb(_x):
                counter[0] += 1

            rhs = np.concatenate([rm[free3], rc.ravel()])
            K = LinearOperator((nv + nq, nv + nq), matvec=k_apply, dtype=float)
            M = LinearOperator((nv + nq, nv + nq), matvec=p_apply, dtype=float)
            dx, _info = minres(K, rhs, M=M, rtol=1e-10, maxiter=budget, callback=cb)
            iters += max(counter[0], 1)
        elif method == "uzawa":
            dx, n_it = _uzawa_step(ops, lap, rm, rc, free3, cells, tol, budget, full)
            iters += n_it
        else:
            raise ValueError(f"unknown method {method!r}")
        v[free3] += dx[:nv]
        q += dx[nv:].reshape(cells)
        if gauge:
            q -= q.mean()
    raise ConvergenceError(
        f"saddle solver stopped after {iters} iterations (momentum {mres:.3e}, continuity {cres:.3e})",
        history,
        (v, q),
    )


def solve_linearized(
    problem: LinearizedProblem,
    tol: float = 1e-8,
    max_iter: int = 3000,
    q0: np.ndarray | None = None,
    v0: VectorField | None = None,
    method: str = "minres",
) -> SaddleSolution:
    """Solve the discrete optimality system of the linearized problem.

    ``method="minres"`` runs preconditioned MINRES on the full system
    (block preconditioner: fast vector Laplacian / scaled pressure mass);
    ``method="uzawa"`` runs CG on the pressure Schur complement with inner
    CG solves. Both restart from the true residual until the momentum
    residual (mesh-independent force norm) and the continuity residual are
    at most ``tol``. The pressure is normalized to zero mean when all of
    the boundary is clamped.
    """
    t0 = time.perf_counter()
    ops = LinearOperators.of(problem)
    dom = problem.domain
    free3 = np.broadcast_to(ops.free, (3,) + dom.shape)
    v = problem.lift()
    if v0 is not None:
        v[free3] = v0.data[free3]
    cells = ops.grid.cells
    q = np.zeros(cells) if q0 is None else np.array(q0, dtype=float).reshape(cells)
    force = ops.node_weights * problem.load.data
    try:
        mres, cres, iters, history = saddle_solve(ops, force, v, q, tol, max_iter, method)
    except ConvergenceError as exc:
        v_last, q_last = exc.last
        raise ConvergenceError(str(exc), exc.history, (VectorField(dom, v_last), q_last)) from None
    return SaddleSolution(
        VectorField(dom, v), q, mres, cres, ops.div_norm(v), iters, history, time.perf_counter() - t0
    )


def solve_shifted(
    problem: LinearizedProblem, vbar: VectorField, tol: float = 1e-8, max_iter: int = 3000, method: str = "minres"
) -> SaddleSolution:
    """Minimize ``G~(v) = G(v) + int E(vbar):H:E(v) + Gbar(vbar)`` over ``v = 0`` on Gamma.

    The cross term acts as the extra nodal force ``-A vbar``; the returned
    ``v`` is the homogeneous part ``v0``, so ``v0 + vbar`` minimizes ``Gbar``.
    """
    hom = problem.with_(vbar=None)
    ops = LinearOperators.of(hom)
    w = ops.node_weights
    load = VectorField(problem.domain, problem.load.data - ops.apply_A(np.asarray(vbar.data, dtype=float)) / w)
    return solve_linearized(hom.with_(load=load), tol, max_iter, method=method)


def _uzawa_step(ops, lap, rm, rc, free3, cells, tol, budget, full):
    """Correction from CG on the Schur complement ``S = B A^-1 B^T + C``."""
    G = ops.G

    def a_inv(r):
        try:
            res = cg(
                lambda x: ops.apply_A(full(x))[free3],
                r,
                tol=1e-12,
                max_iter=10 * budget + 100,
                precond=lambda x: (lap.solve(full(x)) / G)[free3],
            )
        except IndefiniteOperatorError as exc:
            raise IndefiniteOperatorError(f"elastic operator is not positive: {exc}") from None
        return res.x

    def schur(qf):
        qq = qf.reshape(cells)
        x = a_inv(ops.apply_Bt(qq)[free3])
        return (ops.apply_B(full(x)) + ops.apply_C(qq)).ravel()

    dv0 = a_inv(rm[free3])
    # B (dv0 - A^-1 B^T dq) - C dq = rc
    rhs = (ops.apply_B(full(dv0)) - rc).ravel()
    gauge = ops.pressure_gauge()
    res = cg(
        schur,
        rhs,
        tol=1e-10,
        atol=1e-3 * tol,
        max_iter=budget,
        precond=lambda r: r / ops.pressure_scale(),
        project=(lambda r: r - r.mean()) if gauge else None,
    )
    dq = res.x.reshape(cells)
    dv = dv0 - a_inv(ops.apply_Bt(dq)[free3])
    return np.concatenate([dv, dq.ravel()]), res.iterations
