"""Reorthogonalization policies for the restarted Lanczos cycles.

Seven variants: full, k-SO, periodic(f), k-periodic(f), PRO(eta),
k-PRO(eta), and restart-only.  The k-variants orthogonalize against only the
first k basis columns (the retained approximate eigenvectors); the others go
against every filled column.  Periodic and PRO directives always cover two
consecutive Lanczos vectors, and every policy gets the two vectors after a
restart reorthogonalized by the cycle driver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EPS, block_axpy, block_dot, norm2

RANGE_FIRST_K = "first-k"
RANGE_ALL = "all-filled"

_VARIANTS = ("full", "k-so", "periodic", "k-periodic", "pro", "k-pro", "restart-only")


@dataclass(frozen=True)
class ReorthPolicy:
    variant: str
    freq: int = 0          # periodic variants: steps between directive pairs
    eta: float = 0.0       # PRO variants: trigger level on the omega estimate

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown reorthogonalization variant {self.variant!r}")
        if self.variant in ("periodic", "k-periodic") and self.freq < 1:
            raise ValueError("periodic policies need freq >= 1")
        if self.variant in ("pro", "k-pro") and not (EPS < self.eta < 1.0):
            raise ValueError("PRO tolerance must lie in (eps, 1)")

    @property
    def against_first_k(self) -> bool:
        return self.variant in ("k-so", "k-periodic", "k-pro")

    @property
    def needs_omega(self) -> bool:
        return self.variant in ("pro", "k-pro")

    def label(self) -> str:
        if self.variant in ("periodic", "k-periodic"):
            return f"{self.variant}:{self.freq}"
        if self.variant in ("pro", "k-pro"):
            return f"{self.variant}:eta={self.eta:.2e}"
        return self.variant


def full() -> ReorthPolicy:
    return ReorthPolicy("full")


def k_so() -> ReorthPolicy:
    return ReorthPolicy("k-so")


def periodic(freq: int) -> ReorthPolicy:
    return ReorthPolicy("periodic", freq=int(freq))


def k_periodic(freq: int) -> ReorthPolicy:
    return ReorthPolicy("k-periodic", freq=int(freq))


def pro(exponent: float = 0.5) -> ReorthPolicy:
    return ReorthPolicy("pro", eta=EPS**float(exponent))


def k_pro(exponent: float = 0.5) -> ReorthPolicy:
    return ReorthPolicy("k-pro", eta=EPS**float(exponent))


def restart_only() -> ReorthPolicy:
    return ReorthPolicy("restart-only")


def parse_policy(text: str) -> ReorthPolicy:
    """Parse the CLI syntax ``name[:param]``, e.g. ``k-periodic:40``, ``pro:0.75``.

    The PRO parameter is the exponent on machine epsilon.
    """
    name, _, param = text.strip().partition(":")
    name = name.lower()
    if name in ("full", "k-so", "kso", "restart-only", "restartonly"):
        name = {"kso": "k-so", "restartonly": "restart-only"}.get(name, name)
        if param:
            raise ValueError(f"policy {name!r} takes no parameter")
        return ReorthPolicy(name)
    if name in ("periodic", "k-periodic", "kperiodic"):
        name = "k-periodic" if name in ("k-periodic", "kperiodic") else "periodic"
        return ReorthPolicy(name, freq=int(param or 40))
    if name in ("pro", "k-pro", "kpro"):
        name = "k-pro" if name in ("k-pro", "kpro") else "pro"
        return ReorthPolicy(name, eta=EPS ** float(param or 0.5))
    raise ValueError(f"unknown policy {text!r}")


# ------------------------------------------------------------------ omega state


class OmegaState:
    """Running estimates of |<v_new, v_i>| for partial reorthogonalization.

    Two rows are carried: estimates for the newest basis column and for the
    one before it.  Updates follow the classical coefficient recurrence: the
    estimate for <v_{j+1}, v_i> combines column i of the projected matrix
    with the two carried rows, divided by the new coupling beta.  Constants
    below (0.3 drift, 0.6 local level) are the usual safety factors; tests
    check the estimates against directly measured inner products instead of
    trusting them.
    """

    def __init__(self, m: int, n: int):
        self.m = m
        self.n = n
        self.prev = np.zeros(m + 1)
        self.curr = np.zeros(m + 1)
        self.filled = 0  # estimates exist for columns [0, filled)

    def start(self, filled: int) -> None:
        """Reset for a basis whose first ``filled`` columns were just cleaned."""
        self.prev[:] = 0.0
        self.curr[:] = 0.0
        self.prev[:filled] = EPS
        self.curr[:filled] = EPS
        self.filled = filled

    def advance(self, T: np.ndarray, j: int, beta_new: float, anorm: float) -> None:
        """Push estimates one column: basis column j+1 was just produced.

        ``T`` is the (m+1) x m projected matrix with column j complete;
        ``beta_new`` is T[j+1, j].
        """
        if beta_new <= 0:
            beta_new = EPS * max(anorm, 1.0)
        nxt = np.zeros(self.m + 1)
        # extended rows carry the unit self inner products
        cur_ext = self.curr.copy()
        cur_ext[j] = 1.0
        prev_ext = self.prev.copy()
        if j >= 1:
            prev_ext[j - 1] = 1.0
        # i < j: coefficient recurrence through column i of T; the slice runs
        # to row j so leading-block columns keep their coupling-row entry
        for i in range(j):
            col = T[: j + 1, i]
            est = float(col @ cur_ext[: j + 1])
            est -= T[j, j] * cur_ext[i]
            if j >= 1:
                est -= T[j, j - 1] * prev_ext[i]
            est /= beta_new
            drift = 0.3 * EPS * (abs(T[i + 1, i]) + beta_new) / beta_new
            est += np.copysign(drift, est if est != 0 else 1.0)
            sign = 1.0 if est >= 0 else -1.0
            nxt[i] = sign * max(abs(est), EPS)
        # local term: explicit orthogonalization against v_j is roundoff-level
        nxt[j] = 0.6 * EPS * np.sqrt(self.n) * max(anorm, beta_new) / beta_new
        self.prev = self.curr
        self.curr = nxt
        self.filled = j + 1

    def reset_range(self, j0: int, j1: int) -> None:
        """After reorthogonalizing the newest vector against [j0, j1)."""
        self.curr[j0:j1] = EPS

    def max_abs(self, j0: int, j1: int) -> float:
        if j1 <= j0:
            return 0.0
        return float(np.max(np.abs(self.curr[j0:j1])))


# ------------------------------------------------------------------ directives


@dataclass
class Directive:
    cycle: int
    step: int
    range_kind: str
    ncols: int
    mandatory: bool = False  # restart-mandated pair, not policy-triggered


def policy_step(policy: ReorthPolicy, step_index: int, omega: OmegaState | None,
                k: int, filled: int) -> str | None:
    """Base trigger for one Lanczos step (1-based index within the cycle).

    Returns the range kind to orthogonalize against, or None.  Pairing of
    two consecutive vectors for periodic/PRO policies is handled by
    :class:`PolicyState`, which also owns the directive log.
    """
    if policy.variant == "full":
        return RANGE_ALL
    if policy.variant == "k-so":
        return RANGE_FIRST_K if k > 0 else None
    if policy.variant == "restart-only":
        return None
    if policy.variant in ("periodic", "k-periodic"):
        if step_index % policy.freq == 0:
            return RANGE_FIRST_K if policy.against_first_k else RANGE_ALL
        return None
    # PRO variants: trigger when the monitored estimates cross eta
    if omega is None:
        return None
    j1 = k if policy.against_first_k else filled
    if omega.max_abs(0, j1) >= policy.eta:
        return RANGE_FIRST_K if policy.against_first_k else RANGE_ALL
    return None


class PolicyState:
    """Per-solve policy driver: pair continuation plus the directive log."""

    def __init__(self, policy: ReorthPolicy, k: int):
        self.policy = policy
        self.k = k
        self.pending = False
        self.log: list[Directive] = []

    def start_cycle(self) -> None:
        self.pending = False

    def decide(self, cycle: int, step_index: int, omega: OmegaState | None,
               filled: int) -> str | None:
        rng_kind = policy_step(self.policy, step_index, omega, self.k, filled)
        if rng_kind is None and self.pending:
            rng_kind = RANGE_FIRST_K if self.policy.against_first_k else RANGE_ALL
            self.pending = False
        elif rng_kind is not None and self.policy.variant in (
            "periodic", "k-periodic", "pro", "k-pro",
        ):
            # two consecutive vectors must be cleaned
            self.pending = True
        return rng_kind

    def record(self, cycle: int, step: int, range_kind: str, ncols: int,
               mandatory: bool = False) -> None:
        self.log.append(Directive(cycle, step, range_kind, ncols, mandatory))

    def vectors_reorthogonalized(self, mandatory: bool | None = None) -> int:
        if mandatory is None:
            return len(self.log)
        return sum(1 for d in self.log if d.mandatory == mandatory)


# --------------------------------------------------------------- orthogonalize


class BreakdownSignal(Exception):
    """New vector lies numerically in the span of the projection range."""


def orthogonalize(w: np.ndarray, V: np.ndarray, j0: int, j1: int) -> float:
    """One classical Gram-Schmidt pass of w against columns [j0, j1) of V,
    with a second pass when the norm drops enough to signal cancellation.

    Modifies w in place and returns its final norm.  Cost: 2*(j1-j0) vector
    ops per pass.
    """
    if j1 <= j0:
        return norm2(w)
    before = norm2(w)
    block = V[:, j0:j1]
    c = block_dot(block, w)
    block_axpy(block, c, w)
    after = norm2(w)
    if after < before / np.sqrt(2.0):
        c2 = block_dot(block, w)
        block_axpy(block, c2, w)
        after = norm2(w)
    return after


def reorthogonalize(v: np.ndarray, V: np.ndarray, j0: int, j1: int,
                    breakdown_rtol: float = 1e-14) -> np.ndarray:
    """Orthonormalize v against columns [j0, j1) of V, returning a unit vector.

    Raises BreakdownSignal when v is numerically inside the span.
    """
    before = norm2(v)
    if before == 0.0:
        raise BreakdownSignal("zero vector")
    after = orthogonalize(v, V, j0, j1)
    if after < breakdown_rtol * before:
        raise BreakdownSignal(f"norm collapsed {before:.3e} -> {after:.3e}")
    scale = 1.0 / after
    from .core import scale as _scale

    _scale(scale, v)
    return v
