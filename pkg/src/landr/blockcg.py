"""Block conjugate gradients for s simultaneous right-hand sides.

Classic recurrence with s x s Gram solves; the shared block Krylov space
deflates small eigenvalues on its own, which is what makes it the natural
baseline against the deflated single-vector pipeline.  No removal of
converged or dependent right-hand sides is attempted: rank trouble in the
Gram matrices aborts with an instability flag.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .core import count_vecops, counters
from .landr import ConvergenceHistory


class BlockInstabilityError(RuntimeError):
    """Gram matrix lost rank: right-hand sides became dependent."""

    def __init__(self, msg, histories=None, X=None):
        super().__init__(msg)
        self.histories = histories
        self.X = X


def _block_apply(op, P: np.ndarray) -> np.ndarray:
    out = np.empty_like(P)
    for j in range(P.shape[1]):
        out[:, j] = op.apply(P[:, j])
    return out


def block_cg(op, B: np.ndarray, rtol: float = 1e-8, maxit: int | None = None,
             replace_every: int = 50, rank_rtol: float = 1e-12):
    """Run block CG until every column meets rtol; returns (X, histories).

    Histories are per right-hand side.  A Gram matrix whose condition falls
    below ``rank_rtol`` (or a failed Cholesky) raises
    BlockInstabilityError carrying the partial results.
    """
    n, s = B.shape
    maxit = maxit if maxit is not None else 10 * n
    m0, v0 = counters.snapshot()
    hists = [ConvergenceHistory(solver="block-cg", rhs_index=j) for j in range(s)]
    bnorms = np.linalg.norm(B, axis=0)
    if np.any(bnorms == 0.0):
        raise ValueError("zero right-hand side column")

    X = np.zeros_like(B)
    R = B.copy()
    P = R.copy()
    rho = R.conj().T @ R
    count_vecops(s * s)
    it = 0

    def record(itn):
        rn = np.sqrt(np.abs(np.diag(rho)))
        for j in range(s):
            hists[j].add_point(0, itn, rn[j] / bnorms[j], m0=m0, v0=v0)
        return rn

    def finish(itn, converged):
        m1, v1 = counters.snapshot()
        for h in hists:
            h.matvecs = m1 - m0
            h.vecops = v1 - v0
            h.cycles = itn
            h.converged = converged

    rn = record(0)
    while it < maxit:
        if np.all(rn / bnorms <= rtol):
            finish(it, True)
            return X, hists
        Q = _block_apply(op, P)
        G = P.conj().T @ Q
        count_vecops(s * s)
        G = 0.5 * (G + G.conj().T)
        try:
            # dependence guard on the correlation-scaled Gram, so converged
            # (small-norm) columns do not masquerade as rank loss
            dg = np.sqrt(np.abs(np.diag(G)))
            if np.any(dg == 0.0):
                raise np.linalg.LinAlgError("zero search direction")
            ev = np.linalg.eigvalsh(G / np.outer(dg, dg))
            if ev[0] <= rank_rtol:
                raise np.linalg.LinAlgError(
                    f"search block numerically dependent (min scaled eig {ev[0]:.2e})"
                )
            cf = scipy.linalg.cho_factor(G)
            alpha = scipy.linalg.cho_solve(cf, rho)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            for h in hists:
                h.flag("instability")
            finish(it, False)
            raise BlockInstabilityError(
                f"block Gram breakdown at iteration {it}: {exc}", hists, X
            ) from exc
        X += P @ alpha
        R -= Q @ alpha
        count_vecops(2 * s * s + 2 * s)
        it += 1
        if replace_every and it % replace_every == 0:
            R = B - _block_apply(op, X)
            count_vecops(s)
        rho_new = R.conj().T @ R
        count_vecops(s * s)
        try:
            beta = np.linalg.solve(rho, rho_new)
        except np.linalg.LinAlgError as exc:
            for h in hists:
                h.flag("instability")
            finish(it, False)
            raise BlockInstabilityError(
                f"residual Gram breakdown at iteration {it}: {exc}", hists, X
            ) from exc
        P = R + P @ beta
        count_vecops(s * s + s)
        rho = rho_new
        rn = record(it)
    for h in hists:
        h.flag("max-iterations")
    finish(it, False)
    return X, hists
