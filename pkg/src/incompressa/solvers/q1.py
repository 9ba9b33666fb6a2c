"""Matrix-free trilinear (Q1) kernels on the nodal box grid.

Displacements live at the grid nodes. Inside each cell they are
interpolated trilinearly and their gradient is sampled at the 2x2x2 Gauss
points, which integrates every quadratic energy of the gradient exactly.
Volume constraints act on cell averages of the divergence (one per cell).

Gauss point ``g = 4a + 2b + c`` sits at local coordinates
``(s_a, s_b, s_c)`` with ``s_0, s_1 = 1/2 -+ 1/(2 sqrt 3)``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from ..fields import FULL, BoxDomain

_S = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))
_GAUSS = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]


def _lo(axis: int):
    """Drop the last node along spatial ``axis`` (leading component axes allowed)."""
    return (Ellipsis, slice(0, -1)) + (slice(None),) * (2 - axis)


def _hi(axis: int):
    return (Ellipsis, slice(1, None)) + (slice(None),) * (2 - axis)


class Q1Grid:
    """Gauss-point gradients, their adjoint, and cell divergences."""

    def __init__(self, domain: BoxDomain):
        if domain.periodic:
            raise ValueError("Q1 kernels need a bounded box")
        self.domain = domain
        self.shape = domain.shape
        self.cells = domain.cell_shape
        self.h = domain.spacing
        self.cell_volume = float(np.prod(self.h))
        self.weight = self.cell_volume / 8.0  # per Gauss point

    # -- 1D pieces ---------------------------------------------------------
    @staticmethod
    def _interp(a, axis, s):
        return (1.0 - s) * a[_lo(axis)] + s * a[_hi(axis)]

    def _diff(self, a, axis):
        return (a[_hi(axis)] - a[_lo(axis)]) / self.h[axis]

    @staticmethod
    def _interp_t(b, axis, s, out):
        out[_lo(axis)] += (1.0 - s) * b
        out[_hi(axis)] += s * b

    def _diff_t(self, b, axis, out):
        out[_lo(axis)] -= b / self.h[axis]
        out[_hi(axis)] += b / self.h[axis]

    # -- gradients ---------------------------------------------------------
    # Internally gradients are stored component-first, ``(3, 3, 8) + cells``,
    # so that every (i, j) slab is contiguous.
    def grad9(self, u: np.ndarray) -> np.ndarray:
        """``D[i, j, g] = d u_i / d x_j`` at Gauss point g (component-first)."""
        D = np.empty((3, 3, 8) + self.cells)
        for j in range(3):
            o0, o1 = [k for k in range(3) if k != j]
            dj = self._diff(u, j)  # all three components at once
            for s0 in (0, 1):
                t = self._interp(dj, o0, _S[s0])
                for s1 in (0, 1):
                    val = self._interp(t, o1, _S[s1])
                    for g, abc in enumerate(_GAUSS):
                        if abc[o0] == s0 and abc[o1] == s1:
                            D[:, j, g] = val
        return D

    def grad9_t(self, P: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`grad9` (no quadrature weights)."""
        out = np.zeros((3,) + self.shape)
        for j in range(3):
            o0, o1 = [k for k in range(3) if k != j]
            dshape = [3] + list(self.cells)
            dshape[o0 + 1] += 1
            dshape[o1 + 1] += 1
            acc_d = np.zeros(dshape)
            for s0 in (0, 1):
                tshape = [3] + list(self.cells)
                tshape[o1 + 1] += 1
                acc_t = np.zeros(tshape)
                for s1 in (0, 1):
                    gs = [g for g, abc in enumerate(_GAUSS) if abc[o0] == s0 and abc[o1] == s1]
                    val = P[:, j, gs[0]] + P[:, j, gs[1]]
                    self._interp_t(val, o1, _S[s1], acc_t)
                self._interp_t(acc_t, o0, _S[s0], acc_d)
            self._diff_t(acc_d, j, out)
        return out

    def gauss_gradients(self, u: np.ndarray) -> np.ndarray:
        """``G[g, cx, cy, cz, i, j] = d u_i / d x_j`` at Gauss point g."""
        return np.moveaxis(self.grad9(u), (0, 1), (-2, -1))

    def gauss_gradients_t(self, P: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`gauss_gradients` (no quadrature weights)."""
        return self.grad9_t(np.moveaxis(P, (-2, -1), (0, 1)))

    def cell_divergence(self, u: np.ndarray) -> np.ndarray:
        """Cell average of ``div u`` (the exact flux balance of the trilinear field)."""
        total = np.zeros(self.cells)
        for i in range(3):
            others = [k for k in range(3) if k != i]
            t = self._diff(u[i], i)
            t = self._interp(t, others[0], 0.5)
            total += self._interp(t, others[1], 0.5)
        return total

    def cell_divergence_t(self, q: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`cell_divergence`."""
        out = np.zeros((3,) + self.shape)
        for i in range(3):
            others = [k for k in range(3) if k != i]
            s1 = list(self.cells)
            s1[others[1]] += 1
            t1 = np.zeros(s1)
            self._interp_t(q, others[1], 0.5, t1)
            s2 = list(self.cells)
            s2[others[0]] += 1
            s2[others[1]] += 1
            t2 = np.zeros(s2)
            self._interp_t(t1, others[0], 0.5, t2)
            self._diff_t(t2, i, out[i])
        return out

    # -- Dirichlet handling -------------------------------------------------
    def free_mask(self) -> np.ndarray:
        return ~self.domain.gamma_mask()


def _axis_matrices(n: int, d: float, dirichlet: tuple[bool, bool]):
    """1D Q1 stiffness and mass on the nodes of one axis, Dirichlet ends removed."""
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]]) / d
    me = np.array([[2.0, 1.0], [1.0, 2.0]]) * d / 6.0
    for e in range(n - 1):
        K[e : e + 2, e : e + 2] += ke
        M[e : e + 2, e : e + 2] += me
    keep = np.ones(n, dtype=bool)
    keep[0] = not dirichlet[0]
    keep[-1] = not dirichlet[1]
    return K[np.ix_(keep, keep)], M[np.ix_(keep, keep)], keep


class FastLaplacian:
    """Exact inverse of the Q1 scalar Laplacian (with the box's Dirichlet faces).

    The 3D stiffness is ``Kx(x)My(x)Mz + Mx(x)Ky(x)Mz + Mx(x)My(x)Kz``; one
    generalized eigen-decomposition per axis diagonalizes all three terms.
    Used as a preconditioner on free nodes.
    """

    def __init__(self, domain: BoxDomain):
        gamma = domain.gamma
        self.vecs = []
        self.keeps = []
        lams = []
        for ax, (n, d) in enumerate(zip(domain.shape, domain.spacing)):
            if gamma == FULL:
                dirichlet = (True, True)
            elif gamma is None:
                dirichlet = (False, False)
            else:
                dirichlet = (gamma.axis == ax and gamma.side == 0, gamma.axis == ax and gamma.side == 1)
            K, M, keep = _axis_matrices(n, d, dirichlet)
            lam, V = sla.eigh(K, M)
            self.vecs.append(V)
            self.keeps.append(keep)
            lams.append(lam)
        denom = lams[0][:, None, None] + lams[1][None, :, None] + lams[2][None, None, :]
        if np.min(denom) <= 1e-12 * np.max(denom):
            raise ValueError("Laplacian preconditioner needs a Dirichlet face")
        self.inv_denom = 1.0 / denom
        self.index = np.ix_(*self.keeps)

    def solve(self, r: np.ndarray) -> np.ndarray:
        """Apply the inverse to nodal arrays ``(..., nx, ny, nz)``; Dirichlet entries are ignored and returned 0."""
        vx, vy, vz = self.vecs
        t = r[(Ellipsis,) + self.index]
        t = np.einsum("ia,...ijk->...ajk", vx, t, optimize=True)
        t = np.einsum("jb,...ajk->...abk", vy, t, optimize=True)
        t = np.einsum("kc,...abk->...abc", vz, t, optimize=True)
        t *= self.inv_denom
        t = np.einsum("ia,...abc->...ibc", vx, t, optimize=True)
        t = np.einsum("jb,...ibc->...ijc", vy, t, optimize=True)
        t = np.einsum("kc,...ijc->...ijk", vz, t, optimize=True)
        out = np.zeros_like(r)
        out[(Ellipsis,) + self.index] = t
        return out
