"""Demand lifecycle and the controller's demand queue."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

from gwrsim.capability import FIXED, UnifiedDemandSpec
from gwrsim.errors import AlreadyExpired, IllegalTransition, NotAdmitted, PastExpiry


class DemandState(str, Enum):
    REGISTERED = "Registered"
    QUEUED = "Queued"
    ADMITTED = "Admitted"
    MINIMAL_SERVICE = "MinimalService"
    EXPIRED = "Expired"
    REJECTED = "Rejected"

    def __str__(self):
        return self.value


_LEGAL = {
    DemandState.REGISTERED: {DemandState.QUEUED},
    DemandState.QUEUED: {DemandState.ADMITTED, DemandState.EXPIRED, DemandState.REJECTED},
    DemandState.ADMITTED: {DemandState.MINIMAL_SERVICE, DemandState.EXPIRED},
}
TERMINAL = frozenset({DemandState.MINIMAL_SERVICE, DemandState.EXPIRED, DemandState.REJECTED})

FIFO = "fifo"
SKIP_BLOCKING = "skip_blocking"
POLICIES = (FIFO, SKIP_BLOCKING)


@dataclass(eq=False)
class Demand:
    demand_id: int
    pair: tuple[str, str]
    n_min: int
    t_submit: float
    t_expiry: float
    rate_mode: str = FIXED
    rate: float | None = None
    max_rate_attempt: float = math.inf
    path: tuple = ()
    n_done: int = 0
    rate_attempt: float | None = None
    state: DemandState = DemandState.REGISTERED
    t_admitted: float | None = None
    t_terminal: float | None = None
    packet_times: list = field(default_factory=list)

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL

    @property
    def n_remaining(self) -> int:
        return max(self.n_min - self.n_done, 0)

    def transition(self, new: DemandState, now: float):
        if new not in _LEGAL.get(self.state, ()):
            raise IllegalTransition(f"demand {self.demand_id}: {self.state} -> {new}")
        self.state = new
        if new == DemandState.ADMITTED:
            self.t_admitted = now
        elif new in TERMINAL:
            self.t_terminal = now

    def __repr__(self):
        return (
            f"Demand({self.demand_id}, {self.pair}, {self.state}, "
            f"{self.n_done}/{self.n_min}, expiry={self.t_expiry})"
        )


class DemandQueue:
    """Pending demands in submission order; only ``Queued`` demands live here."""

    def __init__(self, policy: str = FIFO, first_id: int = 0):
        if policy not in POLICIES:
            raise ValueError(f"unknown queue policy {policy!r}")
        self.policy = policy
        self._items: list[Demand] = []
        self._ids = itertools.count(first_id)
        self.registered = 0

    def __iter__(self):
        return iter(list(self._items))

    def __len__(self):
        return len(self._items)

    def __contains__(self, demand):
        return demand in self._items

    def remove(self, demand: Demand):
        self._items.remove(demand)

    def reject(self, demand: Demand, now: float):
        self._items.remove(demand)
        demand.transition(DemandState.REJECTED, now)

    def next_id(self) -> int:
        return next(self._ids)


def submit(
    queue: DemandQueue,
    spec: UnifiedDemandSpec,
    now: float,
    *,
    path: tuple = (),
    max_rate_attempt: float = math.inf,
) -> Demand:
    if spec.t_expiry <= now:
        raise AlreadyExpired(f"expiry {spec.t_expiry} <= now {now}")
    d = Demand(
        demand_id=queue.next_id(),
        pair=spec.pair,
        n_min=spec.n_min,
        t_submit=now,
        t_expiry=spec.t_expiry,
        rate_mode=spec.rate_mode,
        rate=spec.rate,
        max_rate_attempt=max_rate_attempt,
        path=tuple(path),
    )
    d.transition(DemandState.QUEUED, now)
    queue._items.append(d)
    queue.registered += 1
    return d


def expire_sweep(queue: DemandQueue, active: dict, now: float) -> list[Demand]:
    """Expire every queued or admitted demand with ``t_expiry <= now``.

    ``active`` maps demand_id to admitted demands and is updated in place.
    """
    expired = []
    for d in list(queue):
        if d.t_expiry <= now:
            queue.remove(d)
            expired.append(d)
    for did in sorted(active):
        d = active[did]
        if d.t_expiry <= now and d.n_done < d.n_min and not d.terminal:
            del active[did]
            expired.append(d)
    for d in expired:
        d.transition(DemandState.EXPIRED, now)
    expired.sort(key=lambda d: (d.t_expiry, d.demand_id))
    return expired


def select_for_admission(
    queue: DemandQueue | Iterable[Demand],
    admissible: Callable[[Demand], bool],
    policy: str | None = None,
) -> list[Demand]:
    """Candidates in queue order under the FIFO or skip-blocking policy.

    The predicate is evaluated lazily and at most once per demand, in queue
    order, so it may carry side effects (e.g. committing utilisation).
    """
    if policy is None:
        policy = queue.policy
    chosen = []
    for d in queue:
        if admissible(d):
            chosen.append(d)
        elif policy == FIFO:
            break
    return chosen


def record_packet(demand: Demand, t_done: float) -> Demand:
    if demand.state != DemandState.ADMITTED:
        raise NotAdmitted(f"demand {demand.demand_id} is {demand.state}")
    if t_done > demand.t_expiry:
        raise PastExpiry(f"packet at {t_done} after expiry {demand.t_expiry}")
    demand.n_done += 1
    demand.packet_times.append(t_done)
    if demand.n_done >= demand.n_min:
        demand.transition(DemandState.MINIMAL_SERVICE, t_done)
    return demand
