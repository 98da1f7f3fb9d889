"""Minimum-residual variants for symmetric/Hermitian indefinite systems.

Minres-DR(m,k) is the minimum-residual counterpart of the deflated restarted
Lanczos driver: the cycle update solves a small least-squares problem instead
of the Galerkin system, and the restart keeps harmonic Ritz vectors, which
are the reliable choice near the origin and in the interior of the spectrum.
Standalone Minres (Paige-Saunders) and deflated Minres for later right-hand
sides round out the set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import axpy, block_dot, count_vecops, counters, dot, norm2, orthodefect
from .dcg import deflation_project, SolutionCache
from .landr import (
    ConvergenceHistory,
    DeflationSpace,
    KrylovBasis,
    ProjectedMatrix,
    SolverConfig,
    continue_cycle,
    first_cycle,
)
from .reorth import PolicyState, OmegaState, reorthogonalize


@dataclass
class HarmonicRitzSet:
    """Harmonic Ritz pairs of one cycle, ordered by closeness to the target."""

    values: np.ndarray       # (k,)
    coeff: np.ndarray        # (m_eff, k) real, unit columns (not orthogonal)
    resnorms: np.ndarray     # (k,) explicit small-matrix residual norms
    target: float
    f: np.ndarray            # (T - target I)^{-1} e_m, reused by the restart
    beta_last: float


def harmonic_ritz(T: ProjectedMatrix, k: int, target: float = 0.0) -> HarmonicRitzSet:
    """Harmonic Ritz pairs from the rank-one-modified standard problem.

    The Petrov-Galerkin condition Tbar^H Tbar g = theta T g is equivalent to
    (T + beta^2 T^{-1} e_m e_m^H) g = theta g for nonsingular T (shifted
    variants for a nonzero target).  A singular block gets the target nudged
    by a tiny delta.
    """
    m_eff = T.m_eff
    tm = T.tm
    beta = float(T.a[m_eff, m_eff - 1])
    em = np.zeros(m_eff)
    em[-1] = 1.0
    sigma = float(target)
    scale_t = float(np.max(np.abs(tm), initial=1.0))
    for attempt in range(3):
        shifted = tm - sigma * np.eye(m_eff)
        try:
            f = np.linalg.solve(shifted, em)
        except np.linalg.LinAlgError:
            f = None
        if f is not None and np.all(np.isfinite(f)):
            break
        delta = 1e-12 * scale_t * (10.0**attempt)
        warnings.warn(
            f"projected block singular at target {sigma}; shifting by {delta:.3e}"
        )
        sigma = sigma + delta
    else:
        raise np.linalg.LinAlgError("projected block remained singular")

    M = shifted + (beta * beta) * np.outer(f, em)
    vals, vecs = np.linalg.eig(M)
    if np.max(np.abs(vals.imag), initial=0.0) > 1e-8 * scale_t:
        warnings.warn("harmonic values have unexpected imaginary parts")
    vals = vals.real + sigma
    vecs = vecs.real
    order = np.argsort(np.abs(vals - target), kind="stable")[:k]
    values = vals[order].copy()
    coeff = vecs[:, order].copy()
    coeff /= np.linalg.norm(coeff, axis=0)
    # explicit residual of each pair through the projected recurrence
    tg = T.tbar @ coeff
    tg[:m_eff, :] -= coeff * values
    resnorms = np.linalg.norm(tg, axis=0)
    return HarmonicRitzSet(values, coeff, resnorms, float(target), f, beta)


def minres_update(basis: KrylovBasis, T: ProjectedMatrix, x0: np.ndarray,
                  r0: np.ndarray, lead_cols: int):
    """Minimize ||c - Tbar d|| over the cycle subspace and update (x, r).

    ``lead_cols`` is how many leading basis columns can carry the projected
    residual: 1 on the first cycle, k+1 after a restart (the restart map is
    built so the residual stays inside the carried block).
    """
    m_eff = T.m_eff
    c = np.zeros(m_eff + 1, dtype=r0.dtype)
    lead = min(lead_cols, m_eff + 1)
    c[:lead] = block_dot(basis.V[:, :lead], r0)
    if c.dtype.kind == "c":
        rhs = np.column_stack([c.real, c.imag])
        dd, _res, _rank, _sv = np.linalg.lstsq(T.tbar, rhs, rcond=None)
        d = dd[:, 0] + 1j * dd[:, 1]
    else:
        d, _res, _rank, _sv = np.linalg.lstsq(T.tbar, c, rcond=None)
    x = x0 + basis.V[:, :m_eff] @ d
    count_vecops(m_eff + 1)
    td = T.tbar @ d
    r = r0 - basis.V[:, : m_eff + 1] @ td
    count_vecops(m_eff + 2)
    lsq_norm = float(np.linalg.norm(c - td))
    return x, r, norm2(r), lsq_norm


def _build_minres_restart(basis: KrylovBasis, T: ProjectedMatrix,
                          hset: HarmonicRitzSet):
    """Restart map P and the transformed (V_{k+1}, Tbar_k)."""
    m_eff = T.m_eff
    k = hset.values.shape[0]
    P = np.zeros((m_eff + 1, k + 1))
    P[:m_eff, :k] = hset.coeff
    P[:, :k], _ = np.linalg.qr(P[:, :k])
    q = np.zeros(m_eff + 1)
    q[:m_eff] = -hset.beta_last * hset.f
    q[m_eff] = 1.0
    for _ in range(2):
        q -= P[:, :k] @ (P[:, :k].T @ q)
    q /= np.linalg.norm(q)
    P[:, k] = q
    Vnew = np.asfortranarray(basis.V[:, : m_eff + 1] @ P)
    count_vecops((k + 1) * (m_eff + 1))
    Tnew = P.T @ (T.tbar @ P[:m_eff, :k])
    Tnew[:k, :k] = 0.5 * (Tnew[:k, :k] + Tnew[:k, :k].T)
    return P, Vnew, Tnew


def minres_restart(basis: KrylovBasis, T: ProjectedMatrix,
                   hset: HarmonicRitzSet) -> np.ndarray:
    """Apply the restart map in place; returns P for instrumentation."""
    P, Vnew, Tnew = _build_minres_restart(basis, T, hset)
    k = Tnew.shape[1]
    basis.V[:, : k + 1] = Vnew
    reorthogonalize(basis.V[:, k], basis.V, 0, k)
    T.a[:] = 0.0
    T.a[: k + 1, :k] = Tnew
    T.a[:k, k] = Tnew[k, :k]
    T.k = k
    T.m_eff = 0
    basis.filled = k + 1
    basis.k = k
    return P


def extract_deflation_harmonic(basis: KrylovBasis, T: ProjectedMatrix,
                               hset: HarmonicRitzSet) -> DeflationSpace:
    _P, Vnew, Tnew = _build_minres_restart(basis, T, hset)
    Vnew.setflags(write=False)
    Tnew.setflags(write=False)
    return DeflationSpace(Vnew, Tnew)


# ------------------------------------------------------------------- minres


def minres(op, b: np.ndarray, x0: np.ndarray | None = None, rtol: float = 1e-8,
           maxit: int | None = None, rhs_index: int = 0,
           r0: np.ndarray | None = None):
    """Standard Minres: Lanczos plus incremental Givens QR, O(1) memory.

    Works for indefinite Hermitian operators; residual norms are tracked by
    the rotation recurrence and are non-increasing by construction.  The
    returned history ends with one true-residual evaluation.
    """
    maxit = maxit if maxit is not None else 10 * op.n
    hist = ConvergenceHistory(solver="minres", rhs_index=rhs_index)
    m0, v0 = counters.snapshot()
    bnorm = norm2(b)
    if bnorm == 0.0:
        raise ValueError("right-hand side is zero")
    if x0 is None:
        x = np.zeros_like(b)
        r1 = b.copy()
    elif r0 is not None:
        x = x0.copy()
        r1 = r0.copy()
    else:
        x = x0.copy()
        r1 = b - op.apply(x0)
        count_vecops(1)

    beta1 = norm2(r1)
    if beta1 == 0.0:
        _mr_finish(hist, m0, v0, 0, True)
        return x, hist
    y = r1.copy()
    r2 = r1.copy()
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    w = np.zeros_like(b)
    w2 = np.zeros_like(b)
    itn = 0
    hist.add_point(0, 0, phibar / bnorm, m0=m0, v0=v0)
    while itn < maxit and phibar / bnorm > rtol:
        itn += 1
        v = (1.0 / beta) * y
        count_vecops(1)
        y = op.apply(v)
        if itn >= 2:
            axpy(-(beta / oldb), r1, y)
        alfa = float(dot(v, y).real)
        axpy(-(alfa / beta), r2, y)
        r1 = r2
        r2 = y.copy()
        oldb = beta
        beta = norm2(r2)
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) * (1.0 / gamma)
        count_vecops(3)
        axpy(phi, w, x)
        hist.add_point(0, itn, phibar / bnorm, m0=m0, v0=v0)
    # close with the true residual
    r_true = b - op.apply(x)
    count_vecops(1)
    final = norm2(r_true) / bnorm
    hist.add_point(0, itn, final, m0=m0, v0=v0)
    hist.residual = r_true
    hist.converged = bool(final <= rtol or phibar / bnorm <= rtol)
    if not hist.converged:
        hist.flag("max-iterations")
    _mr_finish(hist, m0, v0, itn, hist.converged)
    return x, hist


def _mr_finish(hist, m0, v0, iterations, converged):
    m1, v1 = counters.snapshot()
    hist.matvecs = m1 - m0
    hist.vecops = v1 - v0
    hist.cycles = iterations
    hist.converged = converged


def d_minres(op, b: np.ndarray, x0: np.ndarray | None, ds: DeflationSpace,
             rtol: float = 1e-8, maxit: int | None = None,
             prev: SolutionCache | None = None, rhs_index: int = 0):
    """Deflated Minres: Galerkin projection over the deflation space, then
    Minres on the remainder."""
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
    x, hist = minres(op, b, x0, rtol=rtol, maxit=maxit, rhs_index=rhs_index,
                     r0=r0)
    hist.solver = "d-minres"
    m1, v1 = counters.snapshot()
    hist.matvecs = m1 - m0
    hist.vecops = v1 - v0
    return x, hist


# ------------------------------------------------------------------ driver


@dataclass
class MinresDrResult:
    x: np.ndarray
    harmonic: HarmonicRitzSet
    deflation: DeflationSpace
    history: ConvergenceHistory

    @property
    def converged(self) -> bool:
        return self.history.converged


def minres_dr(op, b: np.ndarray, x0: np.ndarray | None = None,
              cfg: SolverConfig | None = None,
              collect_p: list | None = None) -> MinresDrResult:
    """Minres-DR(m,k) driver for indefinite Hermitian systems.

    Same cycle structure as the Galerkin driver, with the minimum-residual
    update and harmonic restarting.  ``collect_p`` (tests) receives every
    restart map for orthonormality checks.
    """
    if cfg is None:
        raise ValueError("cfg is required")
    cfg.validate(op.n)
    m0, v0 = counters.snapshot()
    hist = ConvergenceHistory(solver=f"minres-dr({cfg.m},{cfg.k})")

    bnorm = norm2(b)
    if bnorm == 0.0:
        raise ValueError("right-hand side is zero")
    if x0 is None:
        x = np.zeros_like(b)
        r0 = b.copy()
    else:
        x = x0.copy()
        r0 = b - op.apply(x0)
        count_vecops(1)

    pstate = PolicyState(cfg.reorth_policy, cfg.k)
    omega = OmegaState(cfg.m, op.n) if cfg.reorth_policy.needs_omega else None
    basis, T = first_cycle(op, r0, cfg)

    cycle = 1
    iteration = T.m_eff
    lead = 1
    resid_rel = None if cfg.eig_only else 1.0
    hset = None
    while True:
        hset = harmonic_ritz(T, min(cfg.k, T.m_eff), target=0.0)
        basis.anorm_est = max(basis.anorm_est, float(np.max(np.abs(hset.values))))
        hist.eig_resnorms.append(hset.resnorms.copy())

        if not cfg.eig_only:
            x, r0, rn, _lsq = minres_update(basis, T, x, r0, lead)
            resid_rel = rn / bnorm
        od_sample = None
        if cfg.monitor_orthodefect:
            od_sample = orthodefect(basis.V[:, : T.m_eff])
        hist.add_point(cycle, iteration, resid_rel, od_sample, m0, v0)

        n_want = min(cfg.n_eig_wanted, hset.resnorms.shape[0])
        eig_ok = cfg.n_eig_wanted == 0 or (
            hset.resnorms.shape[0] >= cfg.n_eig_wanted
            and bool(np.all(hset.resnorms[:n_want] <= cfg.eig_rtol))
        )
        lin_ok = cfg.eig_only or (resid_rel is not None and resid_rel <= cfg.lin_rtol)
        if lin_ok and eig_ok:
            hist.converged = True
            break
        if cycle >= cfg.max_cycles:
            hist.flag("max-cycles")
            break
        if basis.breakdown:
            hist.flag("invariant-subspace")
            break

        cycle += 1
        pstate.start_cycle()
        P = minres_restart(basis, T, hset)
        if collect_p is not None:
            collect_p.append(P)
        if omega is not None:
            omega.start(basis.filled)
        continue_cycle(op, basis, T, cfg, pstate, omega, cycle)
        iteration += T.m_eff - basis.k
        lead = basis.k + 1

    ds = extract_deflation_harmonic(basis, T, hset)
    hist.cycles = cycle
    hist.orthodefect_final = orthodefect(basis.V[:, : T.m_eff])
    hist.residual = r0.copy()
    m1, v1 = counters.snapshot()
    hist.matvecs = m1 - m0
    hist.vecops = v1 - v0
    hist.directives = pstate.log
    return MinresDrResult(x, hset, ds, hist)
