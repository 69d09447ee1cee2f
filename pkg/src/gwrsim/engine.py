"""Discrete-event driver for the centrally controlled network.

Interval ``k`` covers ``[k*T_int, (k+1)*T_int)``.  At every interval boundary
the controller activates the schedule computed ``offset_c`` intervals earlier
and then computes the schedule for interval ``k + offset_c``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from gwrsim.admission import AdmissionConfig, UtilizationLedger, admit_pending
from gwrsim.capability import (
    ADAPTIVE,
    FIXED,
    HalfDemand,
    Registry,
    negotiate,
    refresh_capabilities,
)
from gwrsim.demand import DemandQueue, DemandState, expire_sweep, submit
from gwrsim.errors import InvariantViolation
from gwrsim.network import RENEWAL_STREAM, deliver, execute_pga, pga_rng
from gwrsim.scheduler import edf_schedule, expand_jobs


@dataclass(frozen=True)
class DemandTemplate:
    n_min: int = 10
    rate_mode: str = FIXED
    rate: float | None = 0.001
    horizon: float | None = None
    max_rate: float = math.inf

    @property
    def expiry_horizon(self) -> float:
        if self.horizon is not None:
            return self.horizon
        return 10 * self.n_min / self.rate

    def validate(self):
        if self.n_min < 1:
            raise InvariantViolation("demand.n_min", "must be >= 1")
        if self.rate_mode not in (FIXED, ADAPTIVE):
            raise InvariantViolation("demand.rate_mode", f"unknown mode {self.rate_mode!r}")
        if self.rate_mode == FIXED and not (self.rate and self.rate > 0):
            raise InvariantViolation("demand.rate", "fixed-rate demands need rate > 0")
        if self.horizon is None and not (self.rate and self.rate > 0):
            raise InvariantViolation("demand.horizon", "needed when no nominal rate is given")
        if not self.expiry_horizon > 0:
            raise InvariantViolation("demand.horizon", "must be > 0")

    def halves(self, pair, now):
        a, b = pair
        window = (now, now + self.expiry_horizon)
        rate = self.rate if self.rate_mode == FIXED else None
        return (
            HalfDemand(a, b, self.n_min, window, self.rate_mode, rate, self.max_rate),
            HalfDemand(b, a, self.n_min, window, self.rate_mode, rate, self.max_rate),
        )


@dataclass(frozen=True)
class EngineConfig:
    T_int: float = 1200.0
    offset_c: int = 1
    d_msg: float = 0.01
    duration: float = 30 * 86400.0
    lam: float = 1e-5
    pairs: tuple = ()
    demand_template: DemandTemplate = DemandTemplate()
    seed: int = 0

    @property
    def compute_allowance(self) -> float:
        return self.offset_c * self.T_int - 2 * self.d_msg

    def validate(self):
        if not self.T_int > 0:
            raise InvariantViolation("engine.T_int", "must be > 0")
        if self.offset_c < 1:
            raise InvariantViolation("engine.offset_c", "must be >= 1")
        if self.d_msg < 0:
            raise InvariantViolation("engine.d_msg", "must be >= 0")
        if not self.compute_allowance > 0:
            raise InvariantViolation(
                "compute_allowance", "offset_c * T_int - 2 * d_msg must be > 0"
            )
        if not self.duration > 0:
            raise InvariantViolation("engine.duration", "must be > 0")
        if not self.lam > 0:
            raise InvariantViolation("engine.lambda", "must be > 0")
        if len(set(self.pairs)) != len(self.pairs):
            raise InvariantViolation("engine.pairs", "duplicate pair")
        self.demand_template.validate()


@dataclass
class SimConfig:
    engine: EngineConfig
    admission: AdmissionConfig
    registry: Registry


class EventKind(IntEnum):
    # tie-break order at equal timestamps
    EXPIRY = 0
    ARRIVAL = 1
    CYCLE = 2
    PGA_DONE = 3


class EventQueue:
    def __init__(self):
        self._heap = []
        self._seq = itertools.count()

    def push(self, time, kind: EventKind, payload=None):
        heapq.heappush(self._heap, (time, int(kind), next(self._seq), payload))

    def pop(self):
        time, kind, _, payload = heapq.heappop(self._heap)
        return time, EventKind(kind), payload

    def peek_time(self):
        return self._heap[0][0] if self._heap else math.inf

    def __len__(self):
        return len(self._heap)


def exponential_draw(rng, lam):
    """Inverse-transform Exponential(lam) sample."""
    if math.isinf(lam):
        return 0.0
    return -math.log1p(-rng.random()) / lam


def renew_session(pair, now, rng, lam, events: EventQueue):
    t = now + exponential_draw(rng, lam)
    events.push(t, EventKind.ARRIVAL, pair)
    return t


@dataclass
class SimResult:
    config: EngineConfig
    demands: list
    pga_placed: int = 0
    pga_dropped: int = 0
    intervals: int = 0
    schedule_rows: list = field(default_factory=list)
    causality: list = field(default_factory=list)  # (interval, computed_at, distributed_at, t0)

    @property
    def records(self):
        from gwrsim.metrics import DemandRecord

        return [DemandRecord.from_demand(d) for d in self.demands]

    def summary(self):
        from gwrsim.metrics import aggregate

        return aggregate(self.records, pga_placed=self.pga_placed, pga_dropped=self.pga_dropped)


class Simulation:
    def __init__(self, config: SimConfig):
        ec = config.engine
        ec.validate()
        self.cfg = ec
        self.adm = config.admission
        self.snapshot = refresh_capabilities(config.registry, ec.pairs)
        self.caps = self.snapshot.capabilities
        self.pairs = [tuple(p) for p in ec.pairs]
        self.queue = DemandQueue(self.adm.queue_policy)
        self.ledger = UtilizationLedger()
        self.active: dict = {}
        self.all_demands: dict = {}
        self.credit: dict = {}
        self.current: dict = {}
        self.schedules: dict = {}
        self.events = EventQueue()
        self.rngs = {
            p: np.random.default_rng([ec.seed, RENEWAL_STREAM, i]) for i, p in enumerate(self.pairs)
        }
        self.result = SimResult(ec, [])
        self.keep_schedule = True

    # -- helpers ---------------------------------------------------------
    def _cap(self, pair):
        return self.caps[tuple(sorted(pair))]

    def _terminal(self, d, now):
        self.ledger.release(d.demand_id)
        self.active.pop(d.demand_id, None)
        self.credit.pop(d.demand_id, None)
        pair = self._pair_key(d.pair)
        if self.current.get(pair) is d:
            del self.current[pair]
            renew_session(pair, now, self.rngs[pair], self.cfg.lam, self.events)

    def _pair_key(self, pair):
        return pair if pair in self.rngs else tuple(reversed(pair))

    # -- event handlers ----------------------------------------------------
    def on_arrival(self, pair, now):
        half_a, half_b = self.cfg.demand_template.halves(pair, now)
        spec = negotiate(half_a, half_b)
        cap = self._cap(pair)
        cap_attempt = spec.max_rate / cap.p_pkt if cap.p_pkt > 0 else math.inf
        d = submit(self.queue, spec, now, path=cap.path_resources, max_rate_attempt=cap_attempt)
        self.all_demands[d.demand_id] = d
        self.current[pair] = d
        if not cap.p_pkt > 0:
            self.queue.reject(d, now)
            self._terminal(d, now)
            return
        self.events.push(d.t_expiry, EventKind.EXPIRY, d.demand_id)

    def on_expiry(self, demand_id, now):
        d = self.all_demands[demand_id]
        if d.terminal:
            return
        if d in self.queue:
            self.queue.remove(d)
        d.transition(DemandState.EXPIRED, now)
        self._terminal(d, now)

    def on_pga_done(self, outcome, now):
        for ev in deliver([outcome], self.all_demands, now):
            if ev.completed:
                self._terminal(self.all_demands[ev.demand_id], now)

    def on_cycle(self, k, now):
        self.activate(k, now)
        self.controller_cycle(k + self.cfg.offset_c, now)
        nxt = (k + 1) * self.cfg.T_int
        if nxt < self.cfg.duration:
            self.events.push(nxt, EventKind.CYCLE, k + 1)

    # -- controller ----------------------------------------------------------
    def controller_cycle(self, interval_index, now):
        """Sweep expiries, admit, expand and place jobs for ``interval_index``."""
        T = self.cfg.T_int
        for d in expire_sweep(self.queue, self.active, now):
            self._terminal(d, now)
        admitted, _ = admit_pending(self.queue, self.ledger, self.caps, now, self.adm, T)
        for d in admitted:
            self.active[d.demand_id] = d
            self.credit[d.demand_id] = 0.0
        t0 = interval_index * T
        jobs = []
        for did in sorted(self.active):
            d = self.active[did]
            cap = self._cap(d.pair)
            new_jobs, self.credit[did] = expand_jobs(d, (t0, t0 + T), self.credit[did], cap.E_pga)
            jobs.extend(new_jobs)
        sched = edf_schedule(jobs, interval_index=interval_index, t0=t0, length=T)
        sched.computed_at = now
        sched.distributed_at = now + self.cfg.d_msg
        self.schedules[interval_index] = sched
        return sched

    def activate(self, k, now):
        sched = self.schedules.pop(k, None)
        if sched is None:
            return
        res = self.result
        res.intervals += 1
        res.pga_placed += len(sched.placed)
        res.pga_dropped += len(sched.dropped)
        res.causality.append((k, sched.computed_at, sched.distributed_at, sched.t0))
        if self.keep_schedule:
            res.schedule_rows.extend(sched.rows())
        seed = self.cfg.seed
        for job, start in sched.placed:
            d = self.all_demands[job.demand_id]
            if d.terminal:
                continue
            rng = pga_rng(seed, k, job.demand_id, job.index)
            out = execute_pga(job, sched.t0 + start, self._cap(d.pair), rng)
            if out.success and out.t_done < self.cfg.duration:
                self.events.push(out.t_done, EventKind.PGA_DONE, out)

    # -- main loop -------------------------------------------------------------
    def run(self) -> SimResult:
        cfg = self.cfg
        for pair in self.pairs:
            renew_session(pair, 0.0, self.rngs[pair], cfg.lam, self.events)
        self.events.push(0.0, EventKind.CYCLE, 0)
        handlers = {
            EventKind.ARRIVAL: self.on_arrival,
            EventKind.EXPIRY: self.on_expiry,
            EventKind.CYCLE: self.on_cycle,
            EventKind.PGA_DONE: self.on_pga_done,
        }
        while self.events.peek_time() < cfg.duration:
            t, kind, payload = self.events.pop()
            handlers[kind](payload, t)
        self.result.demands = [self.all_demands[i] for i in sorted(self.all_demands)]
        return self.result


def run(config: SimConfig) -> SimResult:
    return Simulation(config).run()
