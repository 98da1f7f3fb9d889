"""Deflated CG for second and later right-hand sides, plus the CG baseline.

D-CG first projects the residual over the deflation space carried out of a
first-right-hand-side solve (a Galerkin projection costing no matvecs, since
the space stores its own operator products), optionally after a projection
over previously computed solution vectors when the right-hand sides are
related, then runs standard CG on what is left.
"""

from __future__ import annotations

import warnings

import numpy as np

from .core import axpy, block_dot, count_vecops, counters, dot, norm2
from .landr import ConvergenceHistory, DeflationSpace


class IndefiniteOperatorError(RuntimeError):
    """CG observed <p, Ap> <= 0: the operator is not positive definite."""

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history


def deflation_project(ds: DeflationSpace, x0: np.ndarray, r0: np.ndarray):
    """Galerkin projection over the deflation space: returns (x, r).

    Solves T_k d = V_k^H r0 and updates via the stored products
    r = r0 - V_{k+1} Tbar_k d, so no operator applications happen here.
    Directions with a numerically zero diagonal entry are excluded.
    """
    k = ds.k
    if k == 0:
        return x0.copy(), r0.copy()
    Vk = ds.V[:, :k]
    c = block_dot(Vk, r0)
    tk = ds.tbar[:k, :]
    if ds.is_diagonal:
        theta = np.diag(tk).copy()
        tiny = 1e-14 * float(np.max(np.abs(theta), initial=0.0))
        dead = np.abs(theta) <= tiny
        if np.any(dead):
            warnings.warn(
                f"excluding {int(dead.sum())} deflation direction(s) with zero "
                "Ritz value"
            )
            theta[dead] = 1.0
            c = c.copy()
            c[dead] = 0.0
        d = c / theta
    else:
        try:
            d = np.linalg.solve(tk, c)
        except np.linalg.LinAlgError:
            warnings.warn("singular projected block; using least-squares projection")
            d, *_ = np.linalg.lstsq(tk, c, rcond=None)
    x = x0 + Vk @ d
    count_vecops(k + 1)
    r = r0 - ds.V @ (ds.tbar @ d)
    count_vecops(k + 2)
    return x, r


class SolutionCache:
    """Orthonormalized previous solutions with their operator products.

    ``add`` keeps Q = orth(x_1, x_2, ...) along with AQ, obtained by running
    the same Gram-Schmidt combination on the cached products, so projecting
    a new residual over earlier solutions costs no matvecs.
    """

    def __init__(self, n: int, dtype):
        self.Q = np.zeros((n, 0), dtype=dtype)
        self.AQ = np.zeros((n, 0), dtype=dtype)

    def add(self, x: np.ndarray, ax: np.ndarray) -> None:
        q = x.copy()
        aq = ax.copy()
        for _ in range(2):
            if self.Q.shape[1]:
                c = block_dot(self.Q, q)
                q -= self.Q @ c
                aq -= self.AQ @ c
                count_vecops(2 * self.Q.shape[1])
        nrm = norm2(q)
        if nrm <= 1e-14 * norm2(x):
            return  # dependent on earlier solutions; nothing new to keep
        q /= nrm
        aq /= nrm
        count_vecops(2)
        self.Q = np.column_stack([self.Q, q])
        self.AQ = np.column_stack([self.AQ, aq])

    def project(self, x0: np.ndarray, r0: np.ndarray):
        """Galerkin projection over the cached solution span."""
        p = self.Q.shape[1]
        if p == 0:
            return x0.copy(), r0.copy()
        G = self.Q.conj().T @ self.AQ
        c = block_dot(self.Q, r0)
        d = np.linalg.solve(G, c)
        x = x0 + self.Q @ d
        r = r0 - self.AQ @ d
        count_vecops(2 * p + 2)
        return x, r


def cg(op, b: np.ndarray, x0: np.ndarray | None = None, rtol: float = 1e-8,
       maxit: int | None = None, replace_every: int = 100,
       rhs_index: int = 0, r0: np.ndarray | None = None):
    """Standard conjugate gradients with counted ops and residual history.

    The recurrence residual is replaced by the true residual b - Ax every
    ``replace_every`` iterations (0 disables) to bound drift on long runs.
    Callers that already know the residual matching x0 (such as d_cg after
    its projections) pass it as ``r0`` to skip the startup matvec.  Raises
    IndefiniteOperatorError when <p, Ap> <= 0 shows the operator is not
    positive definite.
    """
    n = op.n
    maxit = maxit if maxit is not None else 10 * n
    hist = ConvergenceHistory(solver="cg", rhs_index=rhs_index)
    m0, v0 = counters.snapshot()
    bnorm = norm2(b)
    if bnorm == 0.0:
        raise ValueError("right-hand side is zero")
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    elif r0 is not None:
        x = x0.copy()
        r = r0.copy()
    else:
        x = x0.copy()
        r = b - op.apply(x0)
        count_vecops(1)
    p = r.copy()
    rho = dot(r, r).real
    it = 0
    hist.add_point(0, 0, np.sqrt(rho) / bnorm, m0=m0, v0=v0)
    while np.sqrt(rho) / bnorm > rtol and it < maxit:
        ap = op.apply(p)
        pap = dot(p, ap).real
        if pap <= 0.0:
            hist.flag("indefinite")
            _finish(hist, m0, v0, it)
            raise IndefiniteOperatorError(
                f"<p, Ap> = {pap:.3e} at iteration {it}", hist
            )
        alpha = rho / pap
        axpy(alpha, p, x)
        axpy(-alpha, ap, r)
        it += 1
        if replace_every and it % replace_every == 0:
            r = b - op.apply(x)
            count_vecops(1)
        rho_new = dot(r, r).real
        beta = rho_new / rho
        rho = rho_new
        p = r + beta * p
        count_vecops(1)
        hist.add_point(0, it, np.sqrt(rho) / bnorm, m0=m0, v0=v0)
    hist.converged = bool(np.sqrt(rho) / bnorm <= rtol)
    if not hist.converged:
        hist.flag("max-iterations")
    hist.residual = r
    _finish(hist, m0, v0, it)
    return x, hist


def _finish(hist, m0, v0, iterations):
    m1, v1 = counters.snapshot()
    hist.matvecs = m1 - m0
    hist.vecops = v1 - v0
    hist.cycles = iterations


def d_cg(op, b: np.ndarray, x0: np.ndarray | None, ds: DeflationSpace,
         rtol: float = 1e-8, maxit: int | None = None,
         prev: SolutionCache | None = None, replace_every: int = 100,
         rhs_index: int = 0):
    """Deflated CG: project over the deflation space, then run CG.

    ``prev`` optionally projects over previously computed solutions first
    (useful when the right-hand sides are closely related).
    """
    m0, v0 = counters.snapshot()
    if x0 is None:
        x0 = np.zeros_like(b)
        r0 = b.copy()
    else:
        r0 = b - op.apply(x0)
        count_vecops(1)
    if prev is not None:
        x0, r0 = prev.project(x0, r0)
    x0, r0 = deflation_project(ds, x0, r0)
    x, hist = cg(op, b, x0, rtol=rtol, maxit=maxit,
                 replace_every=replace_every, rhs_index=rhs_index, r0=r0)
    hist.solver = "d-cg"
    m1, v1 = counters.snapshot()
    hist.matvecs = m1 - m0
    hist.vecops = v1 - v0
    return x, hist
