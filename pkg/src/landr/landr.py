"""Lan-DR(m,k): deflated restarted Lanczos.

One engine simultaneously solves the Hermitian system Ax = b by Galerkin
projection and computes k approximate eigenpairs.  At each restart the k
retained Ritz vectors plus the last Lanczos vector seed the next cycle, so
the projected matrix is tridiagonal apart from a diagonal-plus-arrow leading
block.  Once the retained eigenvector approximations are accurate they
deflate their eigenvalues from the linear iteration, which is what lets the
restarted method keep pace with unrestarted CG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import reorth as reorth_mod
from .core import (
    Rng,
    axpy,
    block_axpy,
    block_dot,
    count_vecops,
    counters,
    dot,
    norm2,
    orthodefect,
    scale,
)
from .reorth import (
    RANGE_ALL,
    RANGE_FIRST_K,
    OmegaState,
    PolicyState,
    ReorthPolicy,
    orthogonalize,
)

TARGETS = ("smallest-magnitude", "smallest-algebraic", "largest-algebraic")


@dataclass
class SolverConfig:
    """Shared configuration for the deflated restarted drivers."""

    m: int
    k: int
    max_cycles: int = 200
    lin_rtol: float = 1e-8
    eig_rtol: float = 1e-8
    n_eig_wanted: int = 0
    target: str = "smallest-magnitude"
    reorth_policy: ReorthPolicy = field(default_factory=reorth_mod.full)
    retain_largest: int = 0
    eig_only: bool = False
    monitor_orthodefect: bool = False
    breakdown_rtol: float = 1e-14
    seed: int = 0  # only used to draw a fresh direction after a breakdown
    omega_audit: list | None = field(default=None, repr=False, compare=False)

    def validate(self, n: int) -> None:
        if not (1 <= self.k < self.m <= n):
            raise ValueError(
                f"need 1 <= k < m <= n, got k={self.k}, m={self.m}, n={n}"
            )
        for name in ("lin_rtol", "eig_rtol"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")
        if not (0 <= self.n_eig_wanted <= self.k):
            raise ValueError("n_eig_wanted must lie in [0, k]")
        if not (0 <= self.retain_largest <= self.k):
            raise ValueError("retain_largest must lie in [0, k]")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")


class KrylovBasis:
    """Dense orthonormal column block V with cycle bookkeeping."""

    def __init__(self, n: int, m: int, dtype):
        self.V = np.zeros((n, m + 1), dtype=dtype, order="F")
        self.n = n
        self.m = m
        self.k = 0          # retained columns for the current cycle
        self.filled = 0     # live columns
        self.anorm_est = 0.0
        self.breakdown = False


class ProjectedMatrix:
    """The (m+1) x m projected matrix: leading block plus tridiagonal tail.

    Entries are real even for complex-Hermitian operators.
    """

    def __init__(self, m: int):
        self.a = np.zeros((m + 1, m))
        self.m = m
        self.m_eff = 0      # completed coefficient columns
        self.k = 0

    @property
    def tm(self) -> np.ndarray:
        return self.a[: self.m_eff, : self.m_eff]

    @property
    def tbar(self) -> np.ndarray:
        return self.a[: self.m_eff + 1, : self.m_eff]


@dataclass
class RitzSet:
    """Selected approximate eigenpairs of one cycle, in target order."""

    values: np.ndarray      # (k,)
    coeff: np.ndarray       # (m_eff, k), orthonormal columns
    resnorms: np.ndarray    # (k,) shortcut residual norms |beta_last * g_m|
    couplings: np.ndarray   # (k,) signed beta_last * g_m
    theta_full: np.ndarray  # all eigenvalues of the projected block
    g_full: np.ndarray


@dataclass(frozen=True)
class DeflationSpace:
    """(V_{k+1}, Tbar_k) with A V_k = V_{k+1} Tbar_k; safe to share."""

    V: np.ndarray       # n x (k+1), read-only
    tbar: np.ndarray    # (k+1) x k, read-only

    @property
    def k(self) -> int:
        return self.tbar.shape[1]

    @property
    def is_diagonal(self) -> bool:
        tk = self.tbar[: self.k, :]
        off = tk - np.diag(np.diag(tk))
        return float(np.max(np.abs(off), initial=0.0)) == 0.0


@dataclass
class HistoryPoint:
    cycle: int
    iteration: int
    matvecs: int
    vecops: int
    resid_rel: float | None
    orthodefect: float | None = None


@dataclass
class ConvergenceHistory:
    solver: str
    rhs_index: int = 0
    points: list = field(default_factory=list)
    eig_resnorms: list = field(default_factory=list)
    matvecs: int = 0
    vecops: int = 0
    cycles: int = 0
    orthodefect_final: float | None = None
    flags: list = field(default_factory=list)
    converged: bool = False
    directives: list = field(default_factory=list)
    residual: np.ndarray | None = field(default=None, repr=False)

    def add_point(self, cycle, iteration, resid_rel, orthodefect_sample=None,
                  m0=0, v0=0):
        m, v = counters.snapshot()
        self.points.append(
            HistoryPoint(cycle, iteration, m - m0, v - v0, resid_rel,
                         orthodefect_sample)
        )

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    @property
    def final_resid_rel(self) -> float | None:
        for p in reversed(self.points):
            if p.resid_rel is not None:
                return p.resid_rel
        return None


@dataclass
class LanDrResult:
    x: np.ndarray
    ritz: RitzSet
    deflation: DeflationSpace
    history: ConvergenceHistory

    @property
    def converged(self) -> bool:
        return self.history.converged


# ----------------------------------------------------------------- the cycle


def _lanczos_extend(op, basis: KrylovBasis, T: ProjectedMatrix,
                    pstate: PolicyState, omega: OmegaState | None,
                    cycle: int, cfg: SolverConfig) -> None:
    """Run the three-term recurrence from basis.filled columns up to m+1.

    The first step after a restart is the arrow step: it subtracts the known
    couplings to the retained block before the usual alpha/beta terms.
    Reorthogonalization directives come from the policy state; the second
    post-restart vector is always cleaned regardless of policy.
    """
    V = basis.V
    m = T.m
    start = basis.filled
    arrow_j = start - 1
    basis.breakdown = False
    for j in range(arrow_j, m):
        step_idx = j - arrow_j + 1
        vj = V[:, j]
        w = op.apply(vj)
        if j == arrow_j and j > 0:
            block_axpy(V[:, :j], T.a[:j, j].astype(w.dtype, copy=False), w)
        elif j > 0:
            axpy(-T.a[j - 1, j], V[:, j - 1], w)
        alpha = float(dot(vj, w).real)
        axpy(-alpha, vj, w)
        T.a[j, j] = alpha
        if j == arrow_j and j > 0:
            # refinement pass on the diagonal coefficient of the arrow step
            c2 = float(dot(vj, w).real)
            axpy(-c2, vj, w)
            T.a[j, j] += c2
        beta_prev = T.a[j, j - 1] if j > 0 else 0.0
        basis.anorm_est = max(basis.anorm_est, abs(alpha) + abs(beta_prev))

        beta = norm2(w)
        if omega is not None:
            omega.advance(T.a, j, beta, basis.anorm_est)

        if cycle >= 2 and step_idx == 1:
            range_kind = (
                RANGE_FIRST_K if pstate.policy.against_first_k else RANGE_ALL
            )
            mandatory = True
        else:
            range_kind = pstate.decide(cycle, step_idx, omega, filled=j + 1)
            mandatory = False
        if range_kind is not None:
            j1 = basis.k if range_kind == RANGE_FIRST_K else j + 1
            if j1 > 0:
                if cfg.omega_audit is not None and omega is not None and not mandatory:
                    true_max = float(
                        np.max(np.abs(V[:, :j1].conj().T @ (w / max(beta, 1e-300))))
                    )
                    cfg.omega_audit.append((true_max, omega.max_abs(0, j1)))
                beta = orthogonalize(w, V, 0, j1)
                pstate.record(cycle, step_idx, range_kind, j1, mandatory)
                if omega is not None:
                    omega.reset_range(0, j1)

        T.a[j + 1, j] = beta
        if j + 1 < m:
            T.a[j, j + 1] = beta
        basis.anorm_est = max(basis.anorm_est, abs(alpha) + abs(beta_prev) + beta)
        T.m_eff = j + 1
        if beta <= cfg.breakdown_rtol * max(basis.anorm_est, 1.0):
            basis.breakdown = True
            return
        V[:, j + 1] = w
        scale(1.0 / beta, V[:, j + 1])
        basis.filled = j + 2


def first_cycle(op, r0: np.ndarray, cfg: SolverConfig):
    """Step out m standard Lanczos iterations from r0, fully reorthogonalized.

    Returns the basis and projected matrix for the first cycle.
    """
    beta0 = norm2(r0)
    if beta0 == 0.0:
        raise ValueError("starting residual is zero")
    basis = KrylovBasis(op.n, cfg.m, op.dtype)
    T = ProjectedMatrix(cfg.m)
    basis.V[:, 0] = r0
    scale(1.0 / beta0, basis.V[:, 0])
    basis.filled = 1
    basis.k = 0
    pstate = PolicyState(reorth_mod.full(), 0)
    _lanczos_extend(op, basis, T, pstate, None, cycle=1, cfg=cfg)
    return basis, T


def continue_cycle(op, basis: KrylovBasis, T: ProjectedMatrix,
                   cfg: SolverConfig, pstate: PolicyState,
                   omega: OmegaState | None, cycle: int) -> None:
    """Grow a restarted basis (k+1 live columns) back to m+1 columns."""
    _lanczos_extend(op, basis, T, pstate, omega, cycle, cfg)


def _select_indices(theta: np.ndarray, target: str, k: int,
                    retain_largest: int) -> np.ndarray:
    if target == "smallest-magnitude":
        order = np.argsort(np.abs(theta), kind="stable")
    elif target == "smallest-algebraic":
        order = np.argsort(theta, kind="stable")
    elif target == "largest-algebraic":
        order = np.argsort(-theta, kind="stable")
    else:
        raise ValueError(f"unknown target {target!r}")
    r = min(retain_largest, k)
    picked = list(order[: k - r])
    if r:
        chosen = set(picked)
        for idx in np.argsort(-np.abs(theta), kind="stable"):
            if len(picked) == k:
                break
            if idx not in chosen:
                picked.append(idx)
                chosen.add(idx)
        # keep target ordering within the primary part, extras at the end
    return np.asarray(picked, dtype=np.int64)


def compute_ritz(T: ProjectedMatrix, cfg: SolverConfig) -> RitzSet:
    """Eigenpairs of the projected block, selected by the configured target.

    Residual norms use the shortcut |t_{m+1,m} g_m|; the couplings keep the
    sign for the restart block.
    """
    m_eff = T.m_eff
    if m_eff == 0:
        raise ValueError("projected matrix is empty")
    theta, G = scipy.linalg.eigh(T.tm)
    beta_last = T.a[m_eff, m_eff - 1]
    k = min(cfg.k, m_eff)
    sel = _select_indices(theta, cfg.target, k, cfg.retain_largest)
    vals = theta[sel].copy()
    coeff = G[:, sel].copy()
    couplings = beta_last * coeff[-1, :]
    return RitzSet(vals, coeff, np.abs(couplings), couplings, theta, G)


def galerkin_update(basis: KrylovBasis, T: ProjectedMatrix, x0: np.ndarray,
                    r0: np.ndarray, ritz: RitzSet,
                    spike_pos: int | None = None):
    """Solve the projected system T_m d = V_m^H r0 and update iterate/residual.

    When ``spike_pos`` is given the projected right-hand side is known to be
    a single spike there (first cycle: position 0; after a clean restart:
    position k), so one dot product replaces the m-column projection.
    Returns (x, r, resid_norm, stagnated); a numerically singular projected
    block freezes the iterate instead of updating it.
    """
    m_eff = T.m_eff
    theta, G = ritz.theta_full, ritz.g_full
    theta_max = float(np.max(np.abs(theta), initial=0.0))
    if theta_max == 0.0 or float(np.min(np.abs(theta))) <= 1e-12 * theta_max:
        return x0, r0, norm2(r0), True
    if spike_pos is not None:
        gamma = dot(basis.V[:, spike_pos], r0)
        cg = gamma * G[spike_pos, :]
    else:
        c = block_dot(basis.V[:, :m_eff], r0)
        cg = G.T @ c
    d = G @ (cg / theta)
    # a nearly singular block can pass the hard floor yet produce a
    # destructive step; the post-update residual is beta_last |d_m|, so an
    # update that would grow it a hundredfold is frozen instead (indefinite
    # runs legitimately oscillate by single digits per cycle, never this)
    rnorm0 = norm2(r0)
    predicted = abs(T.a[m_eff, m_eff - 1] * d[-1])
    if predicted > 100.0 * rnorm0:
        return x0, r0, rnorm0, True
    x = x0 + basis.V[:, :m_eff] @ d
    count_vecops(m_eff + 1)
    td = T.tbar @ d
    r = r0 - basis.V[:, : m_eff + 1] @ td
    count_vecops(m_eff + 2)
    return x, r, norm2(r), False


def _build_restart_block(basis: KrylovBasis, T: ProjectedMatrix,
                         ritz: RitzSet, rng: Rng | None = None):
    """Materialize (V_{k+1}, Tbar_k) for the retained Ritz pairs."""
    m_eff = T.m_eff
    k = ritz.values.shape[0]
    Vk1 = np.empty((basis.n, k + 1), dtype=basis.V.dtype, order="F")
    Vk1[:, :k] = basis.V[:, :m_eff] @ ritz.coeff
    count_vecops(k * m_eff)
    if basis.filled > m_eff:
        Vk1[:, k] = basis.V[:, m_eff]
    else:
        # breakdown left no residual direction; continue from a fresh draw
        rng = rng or Rng(0)
        if basis.V.dtype.kind == "c":
            Vk1[:, k] = rng.normal_complex(basis.n)
        else:
            Vk1[:, k] = rng.normal(basis.n)
        reorth_mod.reorthogonalize(Vk1[:, k], Vk1, 0, k)
    tbar = np.zeros((k + 1, k))
    tbar[np.arange(k), np.arange(k)] = ritz.values
    tbar[k, :] = ritz.couplings
    return Vk1, tbar


def restart(basis: KrylovBasis, T: ProjectedMatrix, ritz: RitzSet,
            rng: Rng | None = None) -> None:
    """Reseed the basis with the Ritz vectors plus the last Lanczos vector.

    The new projected matrix starts as the diagonal of Ritz values with the
    coupling row (and its mirror column, feeding the arrow step).  The
    carried residual direction is reorthogonalized against the retained
    block, as is the next vector the cycle produces.
    """
    Vk1, tbar = _build_restart_block(basis, T, ritz, rng)
    k = tbar.shape[1]
    basis.V[:, : k + 1] = Vk1
    reorth_mod.reorthogonalize(basis.V[:, k], basis.V, 0, k)
    T.a[:] = 0.0
    T.a[: k + 1, :k] = tbar
    T.a[:k, k] = tbar[k, :]
    T.k = k
    T.m_eff = 0
    basis.filled = k + 1
    basis.k = k


def extract_deflation(basis: KrylovBasis, T: ProjectedMatrix,
                      ritz: RitzSet) -> DeflationSpace:
    """Freeze the deflation data (V_{k+1}, Tbar_k) for later right-hand sides."""
    Vk1, tbar = _build_restart_block(basis, T, ritz)
    Vk1.setflags(write=False)
    tbar.setflags(write=False)
    return DeflationSpace(Vk1, tbar)


# ------------------------------------------------------------------ driver


def lan_dr(op, b: np.ndarray, x0: np.ndarray | None = None,
           cfg: SolverConfig | None = None) -> LanDrResult:
    """Full Lan-DR(m,k) driver.

    Cycles eigenpair extraction, the Galerkin update, restart, and basis
    regrowth until the linear residual and the first ``n_eig_wanted``
    eigenresiduals pass their tolerances or ``max_cycles`` runs out.  The
    returned deflation space always satisfies A V_k = V_{k+1} Tbar_k.
    """
    if cfg is None:
        raise ValueError("cfg is required")
    cfg.validate(op.n)
    m0, v0 = counters.snapshot()
    hist = ConvergenceHistory(solver=f"lan-dr({cfg.m},{cfg.k})")
    rng = Rng(cfg.seed)

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
    # first-cycle residual is exactly parallel to the first basis column;
    # after a clean Galerkin update it is parallel to v_{m+1}, which the
    # restart places at column k.  A frozen (stagnated) update breaks that,
    # so the projection falls back to the dense m-column product.
    residual_tracks_basis = True
    spike_pos: int | None = 0
    resid_rel = None if cfg.eig_only else 1.0
    ritz = None
    while True:
        ritz = compute_ritz(T, cfg)
        basis.anorm_est = max(
            basis.anorm_est, float(np.max(np.abs(ritz.theta_full)))
        )
        hist.eig_resnorms.append(ritz.resnorms.copy())

        if not cfg.eig_only:
            x_new, r_new, rn, stagnated = galerkin_update(
                basis, T, x, r0, ritz, spike_pos
            )
            residual_tracks_basis = not stagnated
            if stagnated:
                hist.flag("stagnated")
            else:
                x, r0 = x_new, r_new
                resid_rel = rn / bnorm
        od_sample = None
        if cfg.monitor_orthodefect:
            od_sample = orthodefect(basis.V[:, : T.m_eff])
        hist.add_point(cycle, iteration, resid_rel, od_sample, m0, v0)

        n_want = min(cfg.n_eig_wanted, ritz.resnorms.shape[0])
        eig_ok = cfg.n_eig_wanted == 0 or (
            ritz.resnorms.shape[0] >= cfg.n_eig_wanted
            and bool(np.all(ritz.resnorms[:n_want] <= cfg.eig_rtol))
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

        cycle += 1
        pstate.start_cycle()
        restart(basis, T, ritz, rng)
        if omega is not None:
            omega.start(basis.filled)
        continue_cycle(op, basis, T, cfg, pstate, omega, cycle)
        iteration += T.m_eff - basis.k
        spike_pos = basis.k if residual_tracks_basis else None

    ds = extract_deflation(basis, T, ritz)
    hist.cycles = cycle
    hist.orthodefect_final = orthodefect(basis.V[:, : T.m_eff])
    hist.residual = r0.copy()
    m1, v1 = counters.snapshot()
    hist.matvecs = m1 - m0
    hist.vecops = v1 - v0
    hist.directives = pstate.log
    return LanDrResult(x, ritz, ds, hist)
