"""Scaled nonlinear energies ``h^-2 int W(I + h grad v) - L(v)`` and their minimization.

The discretization matches :mod:`incompressa.solvers.linear`: the
isochoric energy ``W_iso(J^{-1/3} F)`` is sampled at the 2x2x2 Gauss points
of every cell, while the volume constraint acts on the cell average
``Jbar = mean_g det F_g`` (the exact deformed volume of the trilinear cell
divided by its reference volume). Expanding to second order in ``h``
reproduces the linearized functional exactly, including its constraint
``div_cell v = 0``.

Constraint modes:

* :class:`Penalty` — adds ``h^-2 int weight (Jbar^2 - 1 - 2 log Jbar)``;
* :class:`AugmentedLagrangian` — the same penalty plus
  ``int lambda (Jbar - 1) / h`` with outer multiplier updates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..fields import BoxDomain, VectorField, quadrature_weights
from ..linalg import ConvergenceError
from ..materials import (
    INF,
    ElasticityTensor,
    MaterialModel,
    VolumetricModel,
    _cofactor,
    _det_minus_one,
    _Kinematics,
    is_finite,
    isochoric_energy,
    isochoric_stress,
    volumetric_derivative,
    volumetric_energy,
)
from .linear import LinearOperators, LinearizedProblem, load_functional, saddle_solve
from .q1 import FastLaplacian, Q1Grid

__all__ = [
    "Penalty",
    "AugmentedLagrangian",
    "OptimizerOptions",
    "NonlinearProblem",
    "EnergyReport",
    "MinimizeReport",
    "LineSearchError",
    "ConvergenceRecord",
    "nonlinear_energy",
    "minimize_nonlinear",
    "shifted_functionals",
]


class LineSearchError(ConvergenceError):
    """Backtracking found no acceptable step; ``last`` is the current iterate."""


@dataclass(frozen=True)
class Penalty:
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("penalty weight must be positive")


@dataclass(frozen=True)
class AugmentedLagrangian:
    """Penalty ``weight`` (the initial value; it grows when feasibility stalls) and cell multipliers."""

    weight: float = 1.0
    multipliers: np.ndarray | None = None
    growth: float = 10.0
    max_weight: float = 1e8

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError("penalty weight must be positive")


@dataclass(frozen=True)
class OptimizerOptions:
    gtol: float = 1e-8  # force-norm of the gradient
    max_iter: int = 200  # quasi-Newton iterations per inner solve
    memory: int = 10
    backtrack: float = 0.5
    initial_step: float = 1.0
    armijo: float = 1e-4
    max_backtracks: int = 40
    det_tol: float = 1e-6  # max |Jbar - 1| for the AL outer loop
    max_outer: int = 20
    precondition: bool = True  # H0 = inverse Hessian of the energy at v = 0
    precond_rtol: float = 1e-6


@dataclass
class NonlinearProblem:
    """``G_h(v) = h^-2 int W(I + h grad v) - L(v)`` over ``v = 0`` on Gamma.

    The volumetric energy is ``weight * (J^2 - 1 - 2 log J)`` on cell
    averages, where ``weight`` comes from ``mode`` (default: a penalty with
    the volumetric model's coefficient). ``shift`` (a div-free field) adds
    the cross term ``int E(shift) : D^2W(I) : E(v)`` and the constant
    ``Gbar(shift)`` of the shifted functional.
    """

    domain: BoxDomain
    material: MaterialModel
    volumetric: VolumetricModel
    h: float
    load: VectorField | None = None
    mode: object = None
    options: OptimizerOptions = field(default_factory=OptimizerOptions)
    shift: VectorField | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.domain.periodic or self.domain.gamma is None:
            raise ValueError("the nonlinear problem needs a bounded box with a Dirichlet part")
        if self.mode is None:
            self.mode = Penalty(self.volumetric.c)
        if not isinstance(self.mode, (Penalty, AugmentedLagrangian)):
            raise TypeError("mode must be Penalty or AugmentedLagrangian")
        if self.load is None:
            self.load = VectorField.zeros(self.domain)

    @property
    def weight(self) -> float:
        return self.mode.weight

    def multipliers(self) -> np.ndarray:
        m = getattr(self.mode, "multipliers", None)
        return np.zeros(self.domain.cell_shape) if m is None else np.asarray(m, dtype=float)

    def tensor(self) -> ElasticityTensor:
        """``D^2 W(I)`` of the material with the penalty as volumetric part."""
        return ElasticityTensor.isotropic(self.material.shear_modulus, 4.0 * self.weight)

    def linearized(self, beta: float = 0.0) -> LinearizedProblem:
        """The limit problem on the same grid (exact constraint for ``beta = 0``)."""
        return LinearizedProblem(self.domain, self.tensor(), self.load, beta=beta)


@dataclass
class EnergyReport:
    value: object  # float or INF
    isochoric: float
    volumetric: float
    multiplier: float
    load: float
    shift: float
    max_det_error: float  # max over cells of |Jbar - 1|
    min_det: float  # min over Gauss points of det F
    feasible: bool

    def __float__(self):
        return float(self.value) if is_finite(self.value) else float("inf")


@dataclass
class MinimizeReport:
    energy: float
    gradient_norm: float
    iterations: int
    outer_iterations: int
    max_det_error: float
    multipliers: np.ndarray | None
    weight: float
    converged: bool
    energy_history: list[list[float]] = field(default_factory=list)  # one list per inner solve
    seconds: float = 0.0
    status: str = ""

    def as_dict(self) -> dict:
        return {
            "energy": self.energy,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "outer_iterations": self.outer_iterations,
            "max_det_error": self.max_det_error,
            "weight": self.weight,
            "converged": self.converged,
            "status": self.status,
        }


@dataclass
class ConvergenceRecord:
    h: float
    E_nonlinear: float
    E_linear_min: float
    gap: float
    dist_w1p: float
    max_det_err: float
    iters: int

    def __post_init__(self):
        for name in ("gap", "dist_w1p", "max_det_err"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    COLUMNS = ("h", "E_nonlinear", "E_linear_min", "gap", "dist_w1p", "max_det_err", "iters")

    def row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


# ---------------------------------------------------------------------------
# discrete functional
# ---------------------------------------------------------------------------


class _Functional:
    """Value and gradient of the discrete (augmented) energy on full nodal arrays."""

    def __init__(self, problem: NonlinearProblem, weight: float, multipliers: np.ndarray):
        self.p = problem
        self.grid = Q1Grid(problem.domain)
        self.w = self.grid.weight
        self.V = self.grid.cell_volume
        self.h = problem.h
        self.weight = weight
        self.lam = multipliers
        self.force = quadrature_weights(problem.domain) * problem.load.data
        self.free = ~problem.domain.gamma_mask()
        self.shift_force = None
        self.shift_const = 0.0
        if problem.shift is not None:
            lin = LinearizedProblem(problem.domain, problem.tensor(), problem.load, vbar=problem.shift, beta=0.0)
            ops = LinearOperators.of(lin)
            self.shift_force = ops.apply_A(problem.shift.data)
            self.shift_const = ops.energy_density_sum(problem.shift.data) - load_functional(
                problem.load, problem.shift
            )

    def _kin(self, v: np.ndarray):
        D = self.grid.grad9(v)
        G = np.ascontiguousarray(np.moveaxis(self.h * D, (0, 1), (-2, -1)))
        return G

    def evaluate(self, v: np.ndarray, need_grad: bool = True):
        G = self._kin(v)
        j = _det_minus_one(G)
        jbar = j.mean(axis=0)
        min_det = float(1.0 + j.min())
        if min_det <= 0 or np.any(jbar <= -1.0):
            rep = EnergyReport(INF, np.nan, np.nan, np.nan, np.nan, np.nan, float(np.max(np.abs(jbar))), min_det, False)
            return rep, None
        kin = _Kinematics(G)
        h2 = self.h * self.h
        iso = self.w * float(np.sum(isochoric_energy(self.p.material, kin))) / h2
        vol = self.V * float(np.sum(volumetric_energy(self.weight, jbar))) / h2
        mult = self.V * float(np.sum(self.lam * jbar)) / self.h
        load = float(np.sum(self.force * v))
        shift = 0.0
        if self.shift_force is not None:
            shift = float(np.sum(self.shift_force * v)) + self.shift_const
        value = iso + vol + mult - load + shift
        rep = EnergyReport(value, iso, vol, mult, load, shift, float(np.max(np.abs(jbar))), min_det, True)
        if not need_grad:
            return rep, None
        P = isochoric_stress(self.p.material, kin)
        scal = volumetric_derivative(self.weight, jbar) + self.h * self.lam  # per cell
        P += scal[None, ..., None, None] * _cofactor(kin.F)
        P *= self.w / self.h
        grad = self.grid.grad9_t(np.moveaxis(P, (-2, -1), (0, 1))) - self.force
        if self.shift_force is not None:
            grad += self.shift_force
        grad[:, ~self.free] = 0.0
        return rep, grad

    def jbar_minus_one(self, v: np.ndarray) -> np.ndarray:
        return _det_minus_one(self._kin(v)).mean(axis=0)


def nonlinear_energy(problem: NonlinearProblem, v: VectorField) -> EnergyReport:
    """Discrete ``G_h(v)`` (plus multiplier terms in AL mode) with feasibility diagnostics.

    ``value`` is :data:`INF` when some Gauss point has ``det F <= 0``.
    """
    fn = _Functional(problem, problem.weight, problem.multipliers())
    return fn.evaluate(np.asarray(v.data, dtype=float), need_grad=False)[0]


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


class _HessianAtIdentity:
    """Applies the inverse of ``A_dev + 4 weight B^T V^-1 B`` through a saddle solve."""

    def __init__(self, problem: NonlinearProblem, weight: float, rtol: float):
        dev = ElasticityTensor.isotropic(problem.material.shear_modulus, 0.0).matrix
        self.ops = LinearOperators(
            problem.domain, dev, compliance=1.0 / (4.0 * weight), shear=problem.material.shear_modulus
        )
        self.lap = FastLaplacian(problem.domain)
        self.rtol = rtol
        self.iterations = 0

    def __call__(self, g: np.ndarray) -> np.ndarray:
        ops = self.ops
        v = np.zeros_like(g)
        q = np.zeros(ops.grid.cells)
        tol = self.rtol * ops.force_norm(g)
        if tol == 0.0:
            return v
        _, _, it, _ = saddle_solve(ops, g, v, q, tol, 5000, lap=self.lap)
        self.iterations += it
        return v


def _force_norm(fn: _Functional, g: np.ndarray) -> float:
    w = quadrature_weights(fn.p.domain)
    w = np.where(w > 0, w, 1.0)
    return float(np.sqrt(np.sum(np.where(fn.free, g, 0.0) ** 2 / w)))


def _lbfgs(fn: _Functional, v0: np.ndarray, opts: OptimizerOptions, precond, history: list[float]):
    """Limited-memory BFGS with backtracking (Armijo) line search on full nodal arrays."""
    x = v0.copy()
    rep, g = fn.evaluate(x)
    if not rep.feasible:
        raise ValueError("initial iterate has det F <= 0")
    f = rep.value
    history.append(f)
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    it = 0
    status = "max_iter"
    for it in range(opts.max_iter + 1):
        gn = _force_norm(fn, g)
        if gn <= opts.gtol:
            status = "gtol"
            break
        if it == opts.max_iter:
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            rho = 1.0 / float(np.vdot(y, s))
            a = rho * float(np.vdot(s, q))
            alphas.append((rho, a))
            q -= a * y
        if precond is not None:
            r = precond(q)
        elif Y:
            r = q * (float(np.vdot(S[-1], Y[-1])) / float(np.vdot(Y[-1], Y[-1])))
        else:
            r = q / max(gn, 1.0)
        for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
            b = rho * float(np.vdot(y, r))
            r += (a - b) * s
        d = -r
        slope = float(np.vdot(g, d))
        if slope >= 0:  # memory produced an ascent direction: restart
            S.clear()
            Y.clear()
            d = -(precond(g) if precond is not None else g)
            slope = float(np.vdot(g, d))
        t = opts.initial_step
        scale = abs(rep.isochoric) + abs(rep.volumetric) + abs(rep.multiplier) + abs(rep.load) + abs(rep.shift)
        for _ in range(opts.max_backtracks):
            xn = x + t * d
            rn, gnext = fn.evaluate(xn)
            if rn.feasible and rn.value <= f + opts.armijo * t * slope:
                break
            t *= opts.backtrack
        else:
            if abs(slope) <= 1e3 * np.finfo(float).eps * max(scale, 1e-300):
                status = "roundoff"  # no decrease is measurable any more
                break
            raise LineSearchError(
                f"line search failed at iteration {it} (gradient norm {gn:.3e})", history, VectorField(fn.p.domain, x)
            )
        s = xn - x
        y = gnext - g
        sy = float(np.vdot(s, y))
        if sy > 1e-12 * float(np.sqrt(np.vdot(s, s) * np.vdot(y, y))):
            S.append(s)
            Y.append(y)
            if len(S) > opts.memory:
                S.pop(0)
                Y.pop(0)
        x, f, g, rep = xn, rn.value, gnext, rn
        history.append(f)
    return x, f, g, it, status


def minimize_nonlinear(problem: NonlinearProblem, init: VectorField | None = None, opts: OptimizerOptions | None = None):
    """Quasi-Newton minimization of :func:`nonlinear_energy`; returns ``(v_h, report)``.

    In AL mode the multipliers are updated after each inner solve until
    ``max |Jbar - 1| <= det_tol``; the weight grows when the violation
    fails to shrink by a factor 4. Each inner solve must not increase its
    own objective. The returned problem state (weight, multipliers) is in
    the report; the energy reported is :func:`nonlinear_energy` at the
    final state.
    """
    t0 = time.perf_counter()
    opts = problem.options if opts is None else opts
    dom = problem.domain
    x = np.zeros((3,) + dom.shape) if init is None else np.array(init.data, dtype=float)
    if not VectorField(dom, x).satisfies_dirichlet(1e-14):
        raise ValueError("init must vanish on the Dirichlet part")
    weight = problem.weight
    lam = problem.multipliers().copy()
    history: list[list[float]] = []
    total = 0
    outer = 0
    al = isinstance(problem.mode, AugmentedLagrangian)
    prev_violation = np.inf
    status = ""
    while True:
        fn = _Functional(problem, weight, lam)
        precond = _HessianAtIdentity(problem, weight, opts.precond_rtol) if opts.precondition else None
        start = fn.evaluate(x, need_grad=False)[0].value
        history.append([])
        x, f, g, it, status = _lbfgs(fn, x, opts, precond, history[-1])
        total += it
        if not f <= start:
            raise ConvergenceError(f"outer cycle {outer} increased the energy ({start!r} -> {f!r})", history, x)
        jb = fn.jbar_minus_one(x)
        violation = float(np.max(np.abs(jb)))
        if not al or violation <= opts.det_tol:
            break
        outer += 1
        if outer > opts.max_outer:
            raise ConvergenceError(
                f"augmented Lagrangian: max|J-1| = {violation:.3e} after {opts.max_outer} outer cycles",
                history,
                VectorField(dom, x),
            )
        lam = lam + volumetric_derivative(weight, jb) / problem.h
        if violation > 0.25 * prev_violation:
            weight = min(weight * problem.mode.growth, problem.mode.max_weight)
        prev_violation = violation
    final_mode = replace(problem.mode, weight=weight, multipliers=lam) if al else problem.mode
    final = replace(problem, mode=final_mode)
    rep = nonlinear_energy(final, VectorField(dom, x))
    report = MinimizeReport(
        energy=float(rep.value),
        gradient_norm=_force_norm(fn, g),
        iterations=total,
        outer_iterations=outer,
        max_det_error=rep.max_det_error,
        multipliers=lam if al else None,
        weight=weight,
        converged=status in ("gtol", "roundoff"),
        energy_history=history,
        seconds=time.perf_counter() - t0,
        status=status,
    )
    return VectorField(dom, x), report


# ---------------------------------------------------------------------------
# shifted functionals (nonhomogeneous boundary data)
# ---------------------------------------------------------------------------


@dataclass
class _Evaluator:
    fn: object
    name: str

    def __call__(self, v: VectorField):
        return self.fn(v)


def shifted_functionals(problem, vbar: VectorField, tol: float | None = None):
    """``(G~_h, G~, Gbar)`` for boundary data ``vbar``.

    ``problem`` is a :class:`NonlinearProblem` (its tensor defines the
    cross term) or a :class:`LinearizedProblem` (then ``G~_h`` is ``None``).

    * ``Gbar(v)``: linearized energy when ``v = vbar`` on Gamma and
      ``div v = 0``, else ``INF``;
    * ``G~(v) = G(v) + int E(vbar):H:E(v) + Gbar(vbar)`` for ``v = 0`` on Gamma;
    * ``G~_h(v) = G_h(v) + int E(vbar):H:E(v) + Gbar(vbar)``.
    """
    if isinstance(problem, NonlinearProblem):
        lin = problem.linearized()
        nl = replace(problem, shift=vbar)
    else:
        lin = problem
        nl = None
    tol = lin.feasibility_tol if tol is None else tol
    hom = lin.with_(vbar=None)
    bar = lin.with_(vbar=vbar, feasibility_tol=max(tol, lin.feasibility_tol))
    ops = LinearOperators.of(hom)
    from .linear import linearized_energy

    def gbar(v: VectorField):
        return linearized_energy(bar, v, tol)

    const = gbar(vbar)
    if not is_finite(const):
        raise ValueError("vbar is not divergence-free within tolerance")
    cross_force = ops.apply_A(vbar.data)

    def gtilde(v: VectorField):
        base = linearized_energy(hom, v, tol)
        if not is_finite(base):
            return INF
        return base + float(np.sum(cross_force * v.data)) + const

    g_h = None
    if nl is not None:

        def g_h(v: VectorField):
            rep = nonlinear_energy(nl, v)
            if not v.satisfies_dirichlet(tol):
                return INF
            return rep.value

    return (
        None if g_h is None else _Evaluator(g_h, "G~_h"),
        _Evaluator(gtilde, "G~"),
        _Evaluator(gbar, "Gbar"),
    )
