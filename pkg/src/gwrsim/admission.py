"""Admission control: resource utilisation rule, schedule computation-time rule,
and PGA attempt-rate assignment.

Utilisation is tracked with exact rationals so the incrementally maintained
ledger can be compared for equality with a from-scratch recomputation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from gwrsim.capability import ADAPTIVE, PathCapability
from gwrsim.demand import Demand, DemandQueue, DemandState, select_for_admission
from gwrsim.errors import (
    DemandComplete,
    DemandExpired,
    UnsetRate,
    ZeroSuccessProbability,
)

SCHEDULE_PGA_LIMIT = 1500


@dataclass
class AdmissionConfig:
    compute_allowance: float
    u_max: float = 0.9
    compute_coeff_a: float | None = None
    compute_coeff_b: float = 1.0
    beta: float = 1.2
    queue_policy: str = "fifo"
    rate_cap: float | None = None
    calibration_pgas: int = SCHEDULE_PGA_LIMIT

    def __post_init__(self):
        if not 0 < self.u_max <= 1:
            raise ValueError("u_max must lie in (0, 1]")
        if not self.compute_allowance > 0:
            raise ValueError("compute_allowance must be > 0")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.compute_coeff_a is None:
            self.compute_coeff_a = calibrate_coeff_a(
                self.compute_allowance, self.compute_coeff_b, self.calibration_pgas
            )

    @property
    def max_rate_attempt(self) -> float:
        return math.inf if self.rate_cap is None else self.rate_cap


def _nlogn(n):
    return n * math.log2(max(n, 2))


def calibrate_coeff_a(allowance, b, n_limit=SCHEDULE_PGA_LIMIT):
    """Largest ``a`` with ``a * n log2 n + b <= allowance`` at ``n = n_limit``."""
    if b >= allowance:
        raise ValueError("constant compute term exceeds the allowance")
    a = (allowance - b) / _nlogn(n_limit)
    while a * _nlogn(n_limit) + b > allowance:
        a = math.nextafter(a, 0.0)
    return a


def estimate_compute_time(n_pga: int, config: AdmissionConfig) -> float:
    if n_pga < 0:
        raise ValueError("n_pga must be >= 0")
    return config.compute_coeff_a * _nlogn(n_pga) + config.compute_coeff_b


@dataclass
class Verdict:
    accepted: bool
    reason: str | None = None

    def __bool__(self):
        return self.accepted


def utilization_delta(demand: Demand, capability: PathCapability) -> dict:
    if demand.rate_attempt is None:
        raise UnsetRate(f"demand {demand.demand_id} has no attempt rate")
    u = capability.E_pga * demand.rate_attempt
    return {r: u for r in (demand.path or capability.path_resources)}


@dataclass
class UtilizationLedger:
    usage: dict = field(default_factory=dict)
    contributions: dict = field(default_factory=dict)
    pgas: dict = field(default_factory=dict)

    def utilization(self, resource) -> Fraction:
        return self.usage.get(resource, Fraction(0))

    def max_utilization(self) -> Fraction:
        return max(self.usage.values(), default=Fraction(0))

    @property
    def pga_count(self) -> int:
        return sum(self.pgas.values())

    def fits(self, delta: dict, u_max: float) -> str | None:
        """Return the first offending resource, or None if ``delta`` fits."""
        limit = Fraction(u_max)
        for r, du in delta.items():
            if self.utilization(r) + Fraction(du) > limit:
                return r
        return None

    def commit(self, demand_id, delta: dict, n_pga: int = 0):
        if demand_id in self.contributions:
            raise ValueError(f"demand {demand_id} already charged")
        exact = {r: Fraction(du) for r, du in delta.items()}
        for r, du in exact.items():
            self.usage[r] = self.utilization(r) + du
        self.contributions[demand_id] = exact
        self.pgas[demand_id] = n_pga

    def release(self, demand_id):
        exact = self.contributions.pop(demand_id, None)
        self.pgas.pop(demand_id, None)
        if exact is None:
            return
        for r, du in exact.items():
            left = self.usage[r] - du
            if left:
                self.usage[r] = left
            else:
                del self.usage[r]


def recompute_utilization(demands, capabilities) -> dict:
    """From-scratch U_r over admitted demands, independent of any ledger."""
    usage = {}
    for d in sorted(demands, key=lambda d: d.demand_id):
        cap = capabilities[d.pair]
        u = Fraction(cap.E_pga * d.rate_attempt)
        for r in d.path or cap.path_resources:
            usage[r] = usage.get(r, Fraction(0)) + u
    return {r: u for r, u in usage.items() if u}


def check_utilization(
    ledger: UtilizationLedger,
    demand: Demand,
    delta: dict,
    config: AdmissionConfig,
    commit: bool = True,
) -> Verdict:
    bad = ledger.fits(delta, config.u_max)
    if bad is not None:
        return Verdict(False, f"utilisation of {bad} would exceed {config.u_max}")
    if commit:
        ledger.commit(demand.demand_id, delta)
    return Verdict(True)


def check_schedule_time(current: int, candidate: int, config: AdmissionConfig) -> Verdict:
    if current < 0 or candidate < 0:
        raise ValueError("PGA counts must be >= 0")
    est = estimate_compute_time(current + candidate, config)
    if est > config.compute_allowance:
        return Verdict(
            False,
            f"schedule with {current + candidate} PGAs needs {est:.3f} s "
            f"> allowance {config.compute_allowance:.3f} s",
        )
    return Verdict(True)


def fixed_rate_to_attempt_rate(rate: float, p_pkt: float) -> float:
    if not p_pkt > 0:
        raise ZeroSuccessProbability("packet success probability is zero")
    return rate / p_pkt


def set_adaptive_rate(
    demand: Demand, now: float, capability: PathCapability, config: AdmissionConfig
) -> float:
    if now >= demand.t_expiry:
        raise DemandExpired(f"demand {demand.demand_id} expired at {demand.t_expiry}")
    if demand.n_done >= demand.n_min:
        raise DemandComplete(f"demand {demand.demand_id} already served")
    if not capability.p_pkt > 0:
        raise ZeroSuccessProbability("packet success probability is zero")
    rate = config.beta * demand.n_remaining / (capability.p_pkt * (demand.t_expiry - now))
    rate = min(rate, demand.max_rate_attempt, config.max_rate_attempt)
    demand.rate_attempt = rate
    return rate


def attempt_rate(demand, now, capability, config) -> float:
    if demand.rate_mode == ADAPTIVE:
        return set_adaptive_rate(demand, now, capability, config)
    rate = fixed_rate_to_attempt_rate(demand.rate, capability.p_pkt)
    return min(rate, demand.max_rate_attempt, config.max_rate_attempt)


def pgas_per_interval(rate_attempt: float, t_int: float) -> int:
    """Upper bound on the jobs one interval can hold for this rate (carry < 1)."""
    return math.ceil(rate_attempt * t_int)


def admit_pending(
    queue: DemandQueue,
    ledger: UtilizationLedger,
    capabilities,
    now: float,
    config: AdmissionConfig,
    t_int: float,
) -> tuple[list[Demand], list[Demand]]:
    """One admission pass over the queue.

    Admitted demands leave the queue in state ``Admitted`` and are charged to
    the ledger; every other demand stays queued.
    """

    def try_admit(d: Demand) -> bool:
        cap = capabilities[d.pair]
        rate = attempt_rate(d, now, cap, config)
        u = cap.E_pga * rate
        delta = {r: u for r in (d.path or cap.path_resources)}
        n = pgas_per_interval(rate, t_int)
        if not (
            check_utilization(ledger, d, delta, config, commit=False)
            and check_schedule_time(ledger.pga_count, n, config)
        ):
            d.rate_attempt = None
            return False
        ledger.commit(d.demand_id, delta, n)
        d.rate_attempt = rate
        queue.remove(d)
        d.transition(DemandState.ADMITTED, now)
        return True

    pending = list(queue)
    admitted = select_for_admission(pending, try_admit, queue.policy)
    deferred = [d for d in pending if d not in admitted]
    return admitted, deferred
