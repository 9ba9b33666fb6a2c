"""Command-line experiments: ``incompressa <experiment> --config <path> [--out DIR] [--seed N]``.

Configs are INI-style ``key = value`` tables::

    [experiment]
    kind = gamma-sweep
    seed = 0

    [domain]
    shape = 33, 33, 33
    gamma = full

    [material]
    model = neo_hookean
    mu = 1.0

    [load]
    field = poly
    amplitude = 0.01

    [sweep]
    h = 0.2, 0.1, 0.05, 0.025

    [solver]
    mode = al
    det_tol = 1e-6

Every experiment writes ``results.csv`` (one row per sweep entry, each
row tagged with the config hash and seed) and ``summary.json``. Output
bytes depend only on the config and the seed. Exit codes: 0 success,
2 configuration error, 3 solver failure (a ``PARTIAL`` marker is left in
the output directory next to whatever rows were completed).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import materials as mat
from .fields import BoxDomain, Face, VectorField, grisvard_check, norm_w1p, quadrature_weights
from .flow_recovery import FlowExitError, velocity_library, verify_properties
from .linalg import ConvergenceError, IndefiniteOperatorError
from .solvers import (
    AugmentedLagrangian,
    ConvergenceRecord,
    LinearizedProblem,
    NonlinearProblem,
    OptimizerOptions,
    Penalty,
    linearized_energy,
    minimize_nonlinear,
    shifted_functionals,
    solve_linearized,
    solve_shifted,
)

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "load_config", "parse_config", "run", "main", "EXPERIMENTS"]

log = logging.getLogger("incompressa")

EXPERIMENTS = (
    "material-check",
    "flow-recover",
    "grisvard",
    "solve-linear",
    "solve-nonlinear",
    "gamma-sweep",
    "shifted-sweep",
)
CSV_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    """The experiment configuration is malformed or inconsistent."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return [int(v) for v in vals]


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


@dataclass
class ExperimentConfig:
    kind: str
    sections: dict  # section -> {key: raw string}
    seed: int = 0
    output: str = "out"

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def get(self, sec: str, key: str, default=None):
        return self.section(sec).get(key, default)

    def number(self, sec: str, key: str, default: float | None = None) -> float:
        raw = self.get(sec, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing [{sec}] {key}")
            return float(default)
        vals = _floats(raw)
        if len(vals) != 1:
            raise ConfigError(f"[{sec}] {key} must be a single number")
        return vals[0]

    # derived pieces ------------------------------------------------------
    def h_list(self) -> list[float]:
        raw = self.get("sweep", "h")
        if raw is None:
            raise ConfigError("missing [sweep] h")
        hs = _floats(raw)
        if not hs or any(h <= 0 for h in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("[sweep] h must be positive and strictly decreasing")
        return hs

    def domain(self) -> BoxDomain:
        d = self.section("domain")
        shape = _ints(d.get("shape", "17, 17, 17"))
        extents = _floats(d.get("extents", "1, 1, 1"))
        origin = _floats(d.get("origin", "0, 0, 0"))
        periodic = _bool(d.get("periodic", "false"))
        if len(shape) == 1:
            shape = shape * 3
        if len(shape) != 3 or len(extents) != 3 or len(origin) != 3:
            raise ConfigError("[domain] shape, extents and origin need three entries")
        gamma = None if periodic else BoxDomain.parse_gamma(d.get("gamma", "full"))
        try:
            return BoxDomain(tuple(extents), tuple(shape), gamma, periodic, tuple(origin))
        except ValueError as exc:
            raise ConfigError(f"[domain] {exc}") from None

    def material(self) -> tuple[mat.MaterialModel, mat.VolumetricModel]:
        table = dict(self.section("material")) or {"model": "neo_hookean", "mu": "1.0"}
        try:
            model = mat.MaterialModel.from_config(table)
            vol = mat.VolumetricModel(float(table.get("c", 1.0)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"[material] {exc}") from None
        return model, vol

    def hash(self) -> str:
        canon = json.dumps({"kind": self.kind, "seed": self.seed, "sections": self.sections}, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(text: str, kind: str | None = None, seed: int | None = None, output: str | None = None):
    """Parse config text; ``kind``/``seed``/``output`` override the file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    sections = {s: {k: v.strip() for k, v in cp.items(s)} for s in cp.sections()}
    exp = sections.get("experiment", {})
    file_kind = exp.get("kind")
    if kind is not None and file_kind is not None and file_kind != kind:
        raise ConfigError(f"config is for {file_kind!r}, not {kind!r}")
    kind = kind or file_kind
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}; expected one of {', '.join(EXPERIMENTS)}")
    try:
        file_seed = int(exp.get("seed", 0))
    except ValueError:
        raise ConfigError("[experiment] seed must be an integer") from None
    seed = file_seed if seed is None else int(seed)
    exp = dict(exp, kind=kind, seed=str(seed))
    sections["experiment"] = exp
    out = output or sections.get("output", {}).get("path", "out")
    cfg = ExperimentConfig(kind, sections, seed, out)
    _validate(cfg)
    return cfg


def load_config(path, kind: str | None = None, seed: int | None = None, output: str | None = None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, kind, seed, output)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.kind in ("flow-recover", "gamma-sweep", "shifted-sweep"):
        cfg.h_list()
    if cfg.kind in ("solve-linear", "solve-nonlinear", "gamma-sweep", "shifted-sweep", "flow-recover"):
        cfg.domain()
    if cfg.kind in ("material-check", "solve-linear", "solve-nonlinear", "gamma-sweep", "shifted-sweep"):
        cfg.material()
    if cfg.kind == "solve-nonlinear":
        if cfg.number("solver", "h", 0.1) <= 0:
            raise ConfigError("[solver] h must be positive")
    for sec, key in (("solver", "tol"), ("solver", "det_tol"), ("solver", "gtol"), ("solver", "weight")):
        if cfg.get(sec, key) is not None and cfg.number(sec, key) <= 0:
            raise ConfigError(f"[{sec}] {key} must be positive")
    mode = cfg.get("solver", "mode", "al").lower()
    if mode not in ("al", "penalty"):
        raise ConfigError("[solver] mode must be 'al' or 'penalty'")


# ---------------------------------------------------------------------------
# named fields
# ---------------------------------------------------------------------------


def named_load(domain: BoxDomain, name: str, amplitude: float) -> VectorField:
    """Body forces on the nodes: ``zero``, ``poly``, ``shear_sin``, ``constant``.

    ``poly = (x2^2, x3^2, x1^2)`` is divergence-free and has no reflection
    symmetry; ``shear_sin = (sin 2 pi x2, 0, 0)``.
    """
    x = domain.coords()
    if name == "zero":
        data = np.zeros_like(x)
    elif name == "poly":
        data = np.stack([x[1] ** 2, x[2] ** 2, x[0] ** 2])
    elif name == "shear_sin":
        data = np.stack([np.sin(2 * np.pi * x[1]), np.zeros_like(x[0]), np.zeros_like(x[0])])
    elif name == "constant":
        data = np.stack([np.ones_like(x[0]), np.zeros_like(x[0]), np.zeros_like(x[0])])
    else:
        raise ConfigError(f"unknown load field {name!r}")
    return VectorField(domain, amplitude * data)


def named_boundary(domain: BoxDomain, name: str, amplitude: float) -> VectorField:
    """Div-free boundary data ``vbar``: ``rigid`` (rotation about the box centre) or ``shear``."""
    x = domain.coords()
    c = [domain.origin[i] + 0.5 * domain.extents[i] for i in range(3)]
    if name == "rigid":
        data = np.stack([-(x[1] - c[1]), x[0] - c[0], np.zeros_like(x[0])])
    elif name == "shear":
        data = np.stack([x[1] - c[1], np.zeros_like(x[0]), np.zeros_like(x[0])])
    elif name == "zero":
        data = np.zeros_like(x)
    else:
        raise ConfigError(f"unknown boundary field {name!r}")
    return VectorField(domain, amplitude * data)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class _Table:
    columns: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class RunResult:
    status: int
    out_dir: Path
    files: list[Path]
    summary: dict
    error: str = ""


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x) + 0.0  # no negative zero
        return x if np.isfinite(x) else repr(x)
    return x


def _fmt(x) -> str:
    x = _num(x)
    return repr(x) if isinstance(x, float) else str(x)


def _slope(h, y):
    h, y = np.asarray(h, float), np.asarray(y, float)
    if len(h) < 2 or np.any(y <= 0):
        return None
    return float(np.polyfit(np.log(h), np.log(y), 1)[0])


def _strictly_decreasing_in_h(hs, ys) -> bool:
    order = np.argsort(-np.asarray(hs))
    y = np.asarray(ys)[order]
    return bool(np.all(np.diff(y) < 0))


def _solver_opts(cfg: ExperimentConfig) -> OptimizerOptions:
    s = cfg.section("solver")
    kw = {}
    for key, cast in (
        ("gtol", float),
        ("max_iter", int),
        ("memory", int),
        ("backtrack", float),
        ("initial_step", float),
        ("det_tol", float),
        ("max_outer", int),
        ("precond_rtol", float),
    ):
        if key in s:
            kw[key] = cast(float(s[key])) if cast is int else cast(s[key])
    if "precondition" in s:
        kw["precondition"] = _bool(s["precondition"])
    kw.setdefault("gtol", 1e-11)
    return OptimizerOptions(**kw)


def _mode(cfg: ExperimentConfig, vol: mat.VolumetricModel, multipliers=None):
    kind = cfg.get("solver", "mode", "al").lower()
    weight = cfg.number("solver", "weight", vol.c)
    if kind == "penalty":
        return Penalty(weight)
    return AugmentedLagrangian(weight, multipliers)


def _linear_setup(cfg: ExperimentConfig):
    dom = cfg.domain()
    model, vol = cfg.material()
    load = named_load(dom, cfg.get("load", "field", "zero"), cfg.number("load", "amplitude", 1.0))
    weight = cfg.number("solver", "weight", vol.c)
    tensor = mat.ElasticityTensor.isotropic(model.shear_modulus, 4.0 * weight)
    beta = cfg.number("solver", "beta", 0.0)
    return dom, model, vol, load, LinearizedProblem(dom, tensor, load, beta=beta)


def _material_check(cfg: ExperimentConfig) -> tuple[_Table, dict]:
    rng = np.random.default_rng(cfg.seed)
    model, vol = cfg.material()
    n_pairs = int(cfg.number("check", "pairs", 1000))
    n_rot = int(cfg.number("check", "rotations", 100))
    n_det1 = int(cfg.number("check", "det1_samples", 100))
    n_trfree = int(cfg.number("check", "tracefree_samples", 100))

    from scipy.spatial.transform import Rotation

    def rand_f(k):
        out = []
        while len(out) < k:
            F = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
            if np.linalg.det(F) > 0.1:
                out.append(F)
        return out

    w_identity = mat.energy(model, vol, np.eye(3))
    Fs = rand_f(n_pairs)
    Rs = Rotation.random(n_pairs, random_state=rng).as_matrix()
    frame = max(mat.frame_indifference_check(model, vol, F, R) for F, R in zip(Fs, Rs))
    rots = Rotation.random(n_rot, random_state=rng).as_matrix()
    stress_rot = max(float(np.max(np.abs(mat.stress(model, vol, R)))) for R in rots)

    mu = float(cfg.number("check", "nh_mu", 1.0))
    nh = mat.MaterialModel.neo_hookean(mu)
    og = mat.MaterialModel.ogden([2 * mu], [2.0])
    det1 = [F / np.cbrt(np.linalg.det(F)) for F in rand_f(n_det1)]
    ogden_nh = max(abs(float(mat.energy(og, vol, F)) - float(mat.energy(nh, vol, F))) for F in det1)

    h1 = mat.hessian_at_identity(model, mat.VolumetricModel(1.0))
    h10 = mat.hessian_at_identity(model, mat.VolumetricModel(10.0))
    vol_inv = 0.0
    for _ in range(n_trfree):
        B = rng.standard_normal((3, 3))
        B = 0.5 * (B + B.T)
        B -= np.trace(B) / 3.0 * np.eye(3)
        vol_inv = max(vol_inv, abs(mat.quadratic_form(h1, B) - mat.quadratic_form(h10, B)))

    lam_min = mat.hessian_at_identity(nh, mat.VolumetricModel(1.0)).min_eigenvalue

    alpha = float(cfg.number("check", "ogden_alpha", 1.5))
    ogrowth = mat.MaterialModel.ogden([1.0], [alpha])
    lams = np.geomspace(10.0, 1000.0, 25)
    W = [float(mat.energy(ogrowth, vol, np.diag([l**-2, l, l]))) for l in lams]
    dist = [mat.distance_to_so3(np.diag([l**-2, l, l])) for l in lams]
    growth = float(np.polyfit(np.log(dist), np.log(W), 1)[0])

    checks = {
        "W_identity": float(w_identity),
        "frame_indifference_max": frame,
        "stress_at_rotations_max": stress_rot,
        "ogden_vs_neohookean_max": ogden_nh,
        "volumetric_invariance_max": vol_inv,
        "ellipticity_min_eigenvalue": lam_min,
        "ogden_growth_slope": growth,
    }
    table = _Table(["quantity", "value"], [[k, v] for k, v in checks.items()])
    return table, {"checks": checks}


def _flow_recover(cfg: ExperimentConfig) -> tuple[_Table, dict]:
    f = cfg.section("flow")
    name = f.get("velocity", "abc")
    params = {}
    for key in ("A", "B", "C", "rate", "scale"):
        if key in f:
            params[key] = float(f[key])
    if "omega" in f:
        params["omega"] = _floats(f["omega"])
    if "potential" in f:
        params["potential"] = f["potential"]
    try:
        v = velocity_library(name, **params)
    except KeyError as exc:
        raise ConfigError(f"[flow] {exc}") from None
    dom = cfg.domain()
    steps = int(cfg.number("flow", "steps", 64))
    p = cfg.number("flow", "p", 2.0)
    study = verify_properties(v, cfg.h_list(), dom, steps=steps, p=p)
    cols = ["h", "det_error_flow", "det_error_discrete", "dist_w1p", "dist_linf", "h_grad_inf", "gamma_residual"]
    table = _Table(cols, [[r.row()[c] for c in cols] for r in study])
    return table, {"checks": study.checks}


def _grisvard(cfg: ExperimentConfig) -> tuple[_Table, dict]:
    from .potentials import _X, _bump_poly
    import sympy as sp

    grids = _ints(cfg.get("grisvard", "grids", "17, 33, 65"))
    name = cfg.get("grisvard", "field", "bump_rotation")
    x1, x2, x3 = _X
    b = _bump_poly()
    if name == "bump_rotation":
        zeta = [-b * (x2 - sp.Rational(1, 2)), b * (x1 - sp.Rational(1, 2)), sp.Integer(0)]
    elif name == "bump_gradient":
        zeta = [sp.diff(b, s) for s in _X]
    else:
        raise ConfigError(f"[grisvard] unknown field {name!r}")
    exact = _grisvard_exact(zeta)
    fn = sp.lambdify(_X, zeta, "numpy")
    rows = []
    for n in grids:
        dom = BoxDomain((1.0, 1.0, 1.0), (n, n, n))
        X = dom.coords()
        data = np.stack([np.broadcast_to(np.asarray(c, float), X.shape[1:]) for c in fn(*X)])
        lhs, rhs, gap = grisvard_check(VectorField(dom, data))
        rows.append([n, 1.0 / (n - 1), lhs, rhs, gap, abs(lhs - exact), abs(rhs - exact)])
    hs = [r[1] for r in rows]
    summary = {
        "exact": exact,
        "max_relative_gap": max(r[4] / max(r[2], 1e-300) for r in rows),
        "order_lhs_error": _slope(hs, [r[5] for r in rows]),
        "order_rhs_error": _slope(hs, [r[6] for r in rows]),
        "order_gap": _slope(hs, [r[4] for r in rows]),
    }
    return _Table(["n", "spacing", "lhs", "rhs", "gap", "lhs_error", "rhs_error"], rows), summary


def _grisvard_exact(zeta) -> float:
    """``int |grad zeta|^2`` over the unit cube by tensor Gauss-Legendre (exact on polynomials)."""
    import sympy as sp

    from .potentials import _X

    grad = [[sp.diff(c, s) for s in _X] for c in zeta]
    fn = sp.lambdify(_X, grad, "numpy")
    t, w = np.polynomial.legendre.leggauss(24)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w
    X = np.meshgrid(t, t, t, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    g = fn(*X)
    total = sum(np.broadcast_to(np.asarray(gij, float), W.shape) ** 2 for row in g for gij in row)
    return float(np.sum(W * total))


def _manufactured(dom: BoxDomain, shear: float):
    """``v* = curl(s e3)``, ``q* = sin(2 pi x1)`` and the matching body force on the nodes."""
    import sympy as sp

    from .potentials import _X

    x1, x2, x3 = _X
    s = sp.sin(sp.pi * x1) ** 2 * sp.sin(sp.pi * x2) ** 2 * sp.sin(sp.pi * x3) ** 2
    v = [sp.diff(s, x2), -sp.diff(s, x1), sp.Integer(0)]
    q = sp.sin(2 * sp.pi * x1)
    f = [-shear * sum(sp.diff(vi, xj, 2) for xj in _X) + sp.diff(q, xj) for vi, xj in zip(v, _X)]
    X = dom.coords()

    def ev(exprs):
        fn = sp.lambdify(_X, exprs, "numpy")
        return np.stack([np.broadcast_to(np.asarray(c, float), X.shape[1:]) for c in fn(*X)])

    return ev(v), ev(f)


def _solve_linear(cfg: ExperimentConfig) -> tuple[_Table, dict]:
    """Manufactured-solution convergence study over ``[linear] grids``."""
    model, vol = cfg.material()
    grids = _ints(cfg.get("linear", "grids", "17, 33, 65"))
    tol = cfg.number("solver", "tol", 1e-8)
    beta = cfg.number("solver", "beta", 0.0)
    method = cfg.get("solver", "method", "minres")
    max_iter = int(cfg.number("solver", "max_iter", 5000))
    rows = []
    for n in grids:
        dom = BoxDomain((1.0, 1.0, 1.0), (n, n, n))
        tensor = mat.hessian_at_identity(model, vol)
        exact, force = _manufactured(dom, model.shear_modulus)
        prob = LinearizedProblem(dom, tensor, VectorField(dom, force), beta=beta)
        sol = solve_linearized(prob, tol=tol, max_iter=max_iter, method=method)
        err = float(np.sqrt(np.sum(quadrature_weights(dom) * np.sum((sol.v.data - exact) ** 2, axis=0))))
        rows.append([n, 1.0 / (n - 1), err, sol.divergence_norm, sol.momentum_residual, sol.continuity_residual, sol.iterations])
        log.info("solve-linear n=%d error=%.3e iterations=%d", n, err, sol.iterations)
    order = _slope([r[1] for r in rows], [r[2] for r in rows])
    cols = ["n", "spacing", "l2_error", "divergence_norm", "momentum_residual", "continuity_residual", "iterations"]
    return _Table(cols, rows), {"l2_order": order, "max_divergence": max(r[3] for r in rows)}


def _solve_nonlinear(cfg: ExperimentConfig) -> tuple[_Table, dict]:
    dom, model, vol, load, lin = _linear_setup(cfg)
    h = cfg.number("solver", "h", 0.1)
    prob = NonlinearProblem(dom, model, vol, h, load, _mode(cfg, vol), _solver_opts(cfg))
    v, rep = minimize_nonlinear(prob)
    row = [h, rep.energy, rep.gradient_norm, rep.max_det_error, rep.iterations, rep.outer_iterations, rep.status]
    cols = ["h", "energy", "gradient_norm", "max_det_err", "iters", "outer", "status"]
    return _Table(cols, [row]), {"report": rep.as_dict()}


def _sweep(cfg: ExperimentConfig, shifted: bool, table: _Table) -> dict:
    dom, model, vol, load, lin = _linear_setup(cfg)
    tol = cfg.number("solver", "tol", 1e-12)
    max_iter = int(cfg.number("solver", "linear_max_iter", 20000))
    p = cfg.number("sweep", "p", 2.0)
    opts = _solver_opts(cfg)
    summary: dict = {}
    vbar = None
    if shifted:
        vbar = named_boundary(dom, cfg.get("boundary", "field", "rigid"), cfg.number("boundary", "amplitude", 0.01))
        route1 = solve_linearized(lin.with_(vbar=vbar), tol=tol, max_iter=max_iter)
        sol = solve_shifted(lin, vbar, tol=tol, max_iter=max_iter)
        _, g_tilde, g_bar = shifted_functionals(lin, vbar)
        e_lin = float(g_tilde(sol.v))
        identity = abs(e_lin - float(g_bar(sol.v + vbar)))
        agreement = float(np.max(np.abs(route1.v.data - (sol.v.data + vbar.data))))
        summary.update(
            {
                "shift_identity_residual": identity,
                "two_route_max_difference": agreement,
                "solver_tol": tol,
                "two_route_ok": agreement <= 10 * tol,
                "shift_identity_ok": identity <= 1e-9,
            }
        )
    else:
        sol = solve_linearized(lin, tol=tol, max_iter=max_iter)
        e_lin = float(linearized_energy(lin, sol.v, tol=max(10 * tol, sol.divergence_norm * 2, 1e-300)))
    summary["linear_iterations"] = sol.iterations
    for h in cfg.h_list():
        prob = NonlinearProblem(dom, model, vol, h, load, _mode(cfg, vol, -sol.q), opts, shift=vbar)
        v_h, rep = minimize_nonlinear(prob, sol.v)
        gap = abs(rep.energy - e_lin)
        dist = norm_w1p(v_h - sol.v, p)
        rec = ConvergenceRecord(h, rep.energy, e_lin, gap, dist, rep.max_det_error, rep.iterations)
        table.rows.append(rec.row())
        log.info("h=%g gap=%.3e dist=%.3e", h, gap, dist)
    hs = [r[0] for r in table.rows]
    gaps = [r[3] for r in table.rows]
    dists = [r[4] for r in table.rows]
    summary.update(
        {
            "gap_slope": _slope(hs, gaps),
            "dist_slope": _slope(hs, dists),
            "gap_strictly_decreasing": _strictly_decreasing_in_h(hs, gaps) if any(gaps) else False,
            "dist_strictly_decreasing": _strictly_decreasing_in_h(hs, dists) if any(dists) else False,
            "final_over_initial_gap": (gaps[-1] / gaps[0]) if gaps[0] > 0 else None,
            "max_det_err": max(r[5] for r in table.rows),
        }
    )
    return summary


_RUNNERS = {
    "material-check": _material_check,
    "flow-recover": _flow_recover,
    "grisvard": _grisvard,
    "solve-linear": _solve_linear,
    "solve-nonlinear": _solve_nonlinear,
}


def _csv_bytes(table: _Table, cfg: ExperimentConfig) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(table.columns) + ["config_hash", "seed"])
    for row in table.rows:
        w.writerow([_fmt(x) for x in row] + [cfg.hash(), cfg.seed])
    return buf.getvalue().encode("utf-8")


def _json_bytes(obj) -> bytes:
    def clean(o):
        if isinstance(o, dict):
            return {str(k): clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return _num(o)

    return (json.dumps(clean(obj), sort_keys=True, indent=2) + "\n").encode("utf-8")


def run(config: ExperimentConfig, out_dir=None) -> RunResult:
    """Run one experiment and write ``results.csv`` and ``summary.json``."""
    out = Path(out_dir if out_dir is not None else config.output)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "PARTIAL"
    if marker.exists():
        marker.unlink()
    header = {
        "experiment": config.kind,
        "config_hash": config.hash(),
        "seed": config.seed,
        "csv_version": CSV_VERSION,
    }
    t0 = time.perf_counter()
    sweep = config.kind in ("gamma-sweep", "shifted-sweep")
    table = _Table(list(ConvergenceRecord.COLUMNS)) if sweep else _Table([])
    try:
        if sweep:
            summary = _sweep(config, config.kind == "shifted-sweep", table)
        else:
            table, summary = _RUNNERS[config.kind](config)
    except ConfigError:
        raise
    except (ConvergenceError, IndefiniteOperatorError, FlowExitError, mat.DomainError, ArithmeticError, ValueError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        files = []
        if table.columns:
            (out / "results.csv").write_bytes(_csv_bytes(table, config))
            files.append(out / "results.csv")
        marker.write_text(msg + "\n", encoding="utf-8")
        log.error("solver failure: %s", msg)
        return RunResult(EXIT_SOLVER, out, files + [marker], dict(header, error=msg), msg)
    log.info("%s finished in %.1f s", config.kind, time.perf_counter() - t0)
    summary = dict(header, **summary)
    (out / "results.csv").write_bytes(_csv_bytes(table, config))
    (out / "summary.json").write_bytes(_json_bytes(summary))
    return RunResult(EXIT_OK, out, [out / "results.csv", out / "summary.json"], summary)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="incompressa", description="Incompressible small-strain limit experiments")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="path to the key = value config table")
    parser.add_argument("--out", default=None, help="output directory (default: [output] path or ./out)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.experiment, args.seed, args.out)
        result = run(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if result.status != EXIT_OK:
        print(f"solver failure: {result.error}", file=sys.stderr)
    return result.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
