"""Stochastic execution of placed PGAs on the star topology."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gwrsim.capability import PathCapability
from gwrsim.demand import DemandState, record_packet
from gwrsim.scheduler import PgaJob

PGA_STREAM = 0
RENEWAL_STREAM = 1


def pga_rng(seed: int, interval_index: int, demand_id: int, job_index: int) -> np.random.Generator:
    """Per-job generator so outcomes do not depend on execution order."""
    return np.random.default_rng([seed, PGA_STREAM, interval_index, demand_id, job_index])


@dataclass(frozen=True)
class PgaOutcome:
    job: PgaJob
    start: float
    success: bool
    t_done: float | None = None


def sample_completion_slot(m, p1, p2, p_swap, w, rng) -> int | None:
    """0-based slot in which a packet completes, or None if the block runs out.

    Jumps between elementary-link successes with geometric draws rather than
    stepping through every slot.
    """
    if p1 <= 0 or p2 <= 0:
        return None
    t = 0
    while True:
        first = t + int(rng.geometric(p1)) - 1
        if first >= m:
            return None
        gap = int(rng.geometric(p2))
        if gap > w:
            # link 1 discarded after w failed attempts at link 2
            t = first + w + 1
            continue
        second = first + gap
        if second >= m:
            return None
        if rng.random() < p_swap:
            return second
        t = second + 1


def execute_pga(job: PgaJob, start: float, capability: PathCapability, rng) -> PgaOutcome:
    slot = sample_completion_slot(
        capability.slots_per_pga,
        capability.p_link1,
        capability.p_link2,
        capability.p_swap,
        capability.cutoff_slots,
        rng,
    )
    if slot is None:
        return PgaOutcome(job, start, False)
    t_done = min(start + (slot + 1) * capability.slot_duration, start + job.duration)
    return PgaOutcome(job, start, True, t_done)


@dataclass(frozen=True)
class Delivery:
    demand_id: int
    t_done: float
    completed: bool


def deliver(outcomes, demands, now: float) -> list[Delivery]:
    """Apply successful outcomes in completion-time order.

    Outcomes for terminal demands, or completing after the demand's expiry,
    are discarded: nothing is buffered in the network.
    """
    events = []
    ok = sorted(
        (o for o in outcomes if o.success),
        key=lambda o: (o.t_done, o.job.demand_id, o.job.index),
    )
    for o in ok:
        d = demands.get(o.job.demand_id)
        if d is None or d.terminal or d.state != DemandState.ADMITTED:
            continue
        if o.t_done > d.t_expiry:
            if now >= d.t_expiry:
                d.transition(DemandState.EXPIRED, d.t_expiry)
            continue
        record_packet(d, o.t_done)
        events.append(Delivery(d.demand_id, o.t_done, d.state == DemandState.MINIMAL_SERVICE))
    return events
