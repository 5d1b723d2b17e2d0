"""Privacy budgets, framework configuration and per-substream budget schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf


def _check_epsilon_delta(epsilon: float, delta: float) -> None:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")


def rho_from_eps_delta(epsilon: float, delta: float) -> float:
    """Largest zCDP budget rho whose (epsilon, delta)-DP conversion meets epsilon.

    Solves ``rho + 2 * sqrt(rho * ln(1/delta)) = epsilon`` for rho. The closed
    form ``eps + 2L - 2 sqrt(eps L + L^2)`` (``L = ln(1/delta)``) cancels
    catastrophically for small delta, so the algebraically identical
    ``eps^2 / (sqrt(L + eps) + sqrt(L))^2`` is evaluated instead.

    ``epsilon = inf`` returns ``inf`` (noise disabled).
    """
    _check_epsilon_delta(epsilon, delta)
    if math.isinf(epsilon):
        return INF
    log_inv_delta = -math.log(delta)
    root = math.sqrt(log_inv_delta + epsilon) + math.sqrt(log_inv_delta)
    return (epsilon / root) ** 2


def epsilon_from_rho(rho: float, delta: float) -> float:
    """DP epsilon implied by rho-zCDP at the given delta."""
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) target together with its zCDP budget rho."""

    epsilon: float
    delta: float
    rho: float

    def __post_init__(self) -> None:
        _check_epsilon_delta(self.epsilon, self.delta)
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")

    @classmethod
    def from_eps_delta(cls, epsilon: float, delta: float) -> PrivacyBudget:
        return cls(epsilon, delta, rho_from_eps_delta(epsilon, delta))

    @classmethod
    def noiseless(cls) -> PrivacyBudget:
        """Infinite budget; sketches are built without noise (testing only)."""
        return cls(INF, 0.5, INF)

    @property
    def is_noiseless(self) -> bool:
        return math.isinf(self.rho)


def default_delta(n: int) -> float:
    """The experiments' default delta, ``1 / n**1.5``."""
    if n < 2:
        raise ValueError(f"n must be >= 2 for a default delta, got {n}")
    return float(n) ** -1.5


@dataclass(frozen=True)
class BudgetSchedule:
    """zCDP budgets for the sketches of one substream.

    ``rho1`` goes to the single full-substream sketch; ``rho_tail[j - 2]`` is
    spent twice at checkpoint ``j >= 2`` (once by the forward sketch, once by
    the backward sketch).
    """

    rho: float
    alpha: float
    rho1: float
    rho_tail: tuple[float, ...] = field(default_factory=tuple)

    @property
    def num_checkpoints(self) -> int:
        return 1 + len(self.rho_tail)

    @property
    def total(self) -> float:
        """Budget consumed by one substream (shared sketch counted once)."""
        return self.rho1 + 2.0 * math.fsum(self.rho_tail)

    @property
    def closed_form_total(self) -> float:
        a = self.alpha
        return self.rho * (1.0 - (1.0 - a) ** 2 * a ** (self.num_checkpoints - 1))

    def for_checkpoint(self, j: int) -> float:
        """Budget of a sketch at 1-based checkpoint ``j``."""
        if j == 1:
            return self.rho1
        return self.rho_tail[j - 2]


def budget_schedule(rho: float, alpha: float, num_checkpoints: int) -> BudgetSchedule:
    """Split a substream's budget over its full sketch and its checkpoint pairs.

    The full sketch receives ``rho * (2a - a^2)``; checkpoint ``j >= 2`` receives
    ``rho * a^(j-2) * (1-a)^3 / 2`` for each of its two sketches. The sum never
    exceeds ``rho``.
    """
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if num_checkpoints < 1:
        raise ValueError(f"num_checkpoints must be >= 1, got {num_checkpoints}")
    if math.isinf(rho):
        return BudgetSchedule(rho, alpha, INF, (INF,) * (num_checkpoints - 1))
    rho1 = rho * (2.0 * alpha - alpha * alpha)
    tail_scale = rho * (1.0 - alpha) ** 3 / 2.0
    tail = tuple(tail_scale * alpha ** (j - 2) for j in range(2, num_checkpoints + 1))
    return BudgetSchedule(rho, alpha, rho1, tail)


HASHINGS = ("multiply_shift", "identity")


@dataclass(frozen=True)
class FrameworkConfig:
    """Structural parameters of a sliding-window sketch.

    Attributes:
        w: Window size in items.
        sub_len: Substream length ``L`` (``1 <= L <= w``).
        alpha: Checkpoint density factor in (0, 1); larger means fewer checkpoints.
        rows: Sketch height ``a`` (number of hash rows).
        width: Sketch width ``b`` (counters per row).
        domain_size: Items are integers in ``[1, domain_size]``.
        seed: Master seed for hashing and noise.
        zeta: Optional override of the heavy-hitter slack; defaults to ``e / width``.
        hashing: ``"multiply_shift"`` (default) or ``"identity"`` (column
            ``item - 1``; requires ``width >= domain_size``, used for exact tests).
    """

    w: int
    sub_len: int
    alpha: float
    rows: int
    width: int
    domain_size: int
    seed: int = 0
    zeta: float | None = None
    hashing: str = "multiply_shift"

    def __post_init__(self) -> None:
        if self.w < 1:
            raise ValueError(f"window size w must be >= 1, got {self.w}")
        if not 1 <= self.sub_len <= self.w:
            raise ValueError(f"substream length must be in [1, w={self.w}], got {self.sub_len}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.rows < 1 or self.width < 1:
            raise ValueError(f"rows and width must be >= 1, got {self.rows}x{self.width}")
        if self.domain_size < 1:
            raise ValueError(f"domain_size must be >= 1, got {self.domain_size}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.hashing not in HASHINGS:
            raise ValueError(f"hashing must be one of {HASHINGS}, got {self.hashing!r}")
        if self.hashing == "identity" and self.width < self.domain_size:
            raise ValueError("identity hashing needs width >= domain_size")

    @classmethod
    def theory(cls, w: int, **kwargs) -> FrameworkConfig:
        """Substreams of ``ceil(sqrt(w))`` items, as in the asymptotic analysis."""
        return cls(w=w, sub_len=math.isqrt(w - 1) + 1, **kwargs)

    @classmethod
    def experimental(cls, w: int, **kwargs) -> FrameworkConfig:
        """Substreams of ``ceil(0.1 w)`` items, the experimental default."""
        return cls(w=w, sub_len=max(1, -(-w // 10)), **kwargs)

    @property
    def heavy_hitter_zeta(self) -> float:
        return self.zeta if self.zeta is not None else math.e / self.width

    @property
    def eta(self) -> float:
        """Diagnostic failure probability ``e^-rows`` of one sketch."""
        return math.exp(-self.rows)

    @property
    def max_substreams(self) -> int:
        return -(-self.w // self.sub_len) + 1


def pcms_xi(rho: float, zeta: float, eta: float) -> float:
    """Additive noise term of a single private count-min sketch's error bound.

    With probability ``1 - eta`` an estimate lies within ``zeta * n + xi`` of the
    true count, where ``n`` is the number of inserted items.
    """
    if math.isinf(rho):
        return 0.0
    log_term = math.log(2.0 / eta)
    return math.sqrt(2.0 / rho * log_term) * math.sqrt(math.log(4.0 / (zeta * eta) * log_term))


def window_error_bound(config: FrameworkConfig, schedule: BudgetSchedule) -> float:
    """Diagnostic additive error for a window query with aligned endpoints.

    Sums the per-substream bounds for the ``ceil(w/L) - 1`` fully covered
    substreams plus both partially covered ones, taking the full-substream
    sketch at each end. Big-O constants are those of the single-sketch bound,
    so this is a reference magnitude, not a guarantee.
    """
    zeta = math.e / config.width
    eta = config.eta
    L = config.sub_len
    xi_full = pcms_xi(schedule.rho1, zeta, eta)
    middle = max(0, -(-config.w // L) - 1)
    return middle * (zeta * L + xi_full) + (config.alpha + zeta) * 2 * L + 2 * xi_full
