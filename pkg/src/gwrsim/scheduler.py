"""Periodic PGA job expansion and non-preemptive multi-resource EDF placement.

All job times are relative to the start of the scheduling interval.  Each job
reserves every resource on its path for ``[start, start + duration)``.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class PgaJob:
    demand_id: int
    index: int
    release: float
    deadline: float
    duration: float
    resources: tuple

    @property
    def order_key(self):
        return (self.deadline, self.release, self.demand_id, self.index)


@dataclass
class NetworkSchedule:
    interval_index: int
    t0: float
    length: float
    placed: list = field(default_factory=list)  # (PgaJob, start)
    dropped: list = field(default_factory=list)
    computed_at: float | None = None
    distributed_at: float | None = None

    @property
    def bounds(self):
        return (self.t0, self.t0 + self.length)

    def rows(self):
        """Dump rows: interval_index, demand_id, absolute start, duration, resources."""
        for job, start in self.placed:
            yield (
                self.interval_index,
                job.demand_id,
                self.t0 + start,
                job.duration,
                ";".join(str(r) for r in job.resources),
            )


class ResourceTimeline:
    """Sorted, disjoint half-open reservations on one resource."""

    __slots__ = ("starts", "ends")

    def __init__(self):
        self.starts: list[float] = []
        self.ends: list[float] = []

    def __len__(self):
        return len(self.starts)

    def conflict_end(self, s: float, e: float) -> float | None:
        """End of the earliest reservation overlapping ``[s, e)``, if any."""
        i = bisect.bisect_right(self.starts, s) - 1
        if i >= 0 and self.ends[i] > s:
            return self.ends[i]
        i += 1
        if i < len(self.starts) and self.starts[i] < e:
            return self.ends[i]
        return None

    def reserve(self, s: float, e: float):
        i = bisect.bisect_right(self.starts, s)
        if (i > 0 and self.ends[i - 1] > s) or (i < len(self.starts) and self.starts[i] < e):
            raise ValueError(f"reservation [{s}, {e}) overlaps an existing one")
        self.starts.insert(i, s)
        self.ends.insert(i, e)


def expand_jobs(demand, interval_bounds, carry_credit: float, pga_duration: float):
    """Turn an admitted demand's attempt rate into periodic jobs for one interval.

    Returns ``(jobs, new_credit)``.  Job ``j`` of ``k`` has release ``j*T/k`` and
    deadline ``(j+1)*T/k``.  Jobs starting at or after the demand's expiry are
    not generated, deadlines are clipped to the expiry, and jobs that can no
    longer fit their window are rejected here.
    """
    t0, t1 = interval_bounds
    span = t1 - t0
    rate = demand.rate_attempt or 0.0
    if rate <= 0:
        return [], carry_credit
    owed = rate * span + carry_credit
    k = math.floor(owed)
    new_credit = max(owed - k, 0.0)
    jobs = []
    limit = demand.t_expiry - t0
    for j in range(k):
        release = span * j / k
        if release >= limit:
            break
        deadline = span if j == k - 1 else span * (j + 1) / k
        deadline = min(deadline, limit)
        if release + pga_duration > deadline:
            log.debug("demand %s job %d cannot fit its window", demand.demand_id, j)
            continue
        jobs.append(PgaJob(demand.demand_id, j, release, deadline, pga_duration, tuple(demand.path)))
    return jobs, new_credit


def edf_schedule(jobs, timelines=None, interval_index=0, t0=0.0, length=math.inf) -> NetworkSchedule:
    """Greedy non-preemptive EDF: each job, in (deadline, release, demand_id)
    order, takes the earliest start at which all its resources are free."""
    if timelines is None:
        timelines = {}
    sched = NetworkSchedule(interval_index, t0, length)
    for job in sorted(jobs, key=lambda j: j.order_key):
        tls = [timelines.setdefault(r, ResourceTimeline()) for r in job.resources]
        s, d = job.release, job.duration
        while s + d <= job.deadline:
            moved = False
            for tl in tls:
                end = tl.conflict_end(s, s + d)
                if end is not None:
                    s = end
                    moved = True
            if not moved:
                break
        if s + d > job.deadline:
            sched.dropped.append(job)
            continue
        for tl in tls:
            tl.reserve(s, s + d)
        sched.placed.append((job, s))
    return sched


class Violation(NamedTuple):
    kind: str
    detail: str


def verify_schedule(schedule: NetworkSchedule) -> list[Violation]:
    """Independent pairwise checker; an empty list means the schedule is valid."""
    out = []
    placed = schedule.placed
    if not placed:
        return out
    starts = np.array([s for _, s in placed], dtype=float)
    durs = np.array([j.duration for j, _ in placed], dtype=float)
    ends = starts + durs
    for (job, s), e in zip(placed, ends):
        if s < 0 or e > schedule.length:
            out.append(Violation("bounds", f"demand {job.demand_id} job {job.index} at [{s}, {e})"))
        if s < job.release:
            out.append(Violation("release", f"demand {job.demand_id} job {job.index} starts {s} < {job.release}"))
        if e > job.deadline:
            out.append(Violation("deadline", f"demand {job.demand_id} job {job.index} ends {e} > {job.deadline}"))
    by_resource: dict = {}
    for i, (job, _) in enumerate(placed):
        for r in set(job.resources):
            by_resource.setdefault(r, []).append(i)
    for r, idx in by_resource.items():
        if len(idx) < 2:
            continue
        idx = np.array(idx)
        s, e = starts[idx], ends[idx]
        clash = (s[:, None] < e[None, :]) & (s[None, :] < e[:, None])
        ii, jj = np.nonzero(np.triu(clash, k=1))
        for a, b in zip(ii, jj):
            ja, jb = placed[idx[a]][0], placed[idx[b]][0]
            out.append(
                Violation(
                    "overlap",
                    f"{r}: demand {ja.demand_id} job {ja.index} and demand {jb.demand_id} job {jb.index}",
                )
            )
    return out
