import itertools
from fractions import Fraction

import numpy as np
import pytest

from gwrsim.capability import star_registry


@pytest.fixture
def star():
    return star_registry()


@pytest.fixture
def small_star():
    # tiny blocks so the DP and samplers stay cheap
    return star_registry(slots_per_pga=4, p_elem=0.5, p_swap=1.0, memory_lifetime=0.05)


def enumerate_packet_prob(m, p1, p2, p_swap, w):
    """Exhaustive oracle: walk every slot-outcome sequence of the sequential scheme.

    Each slot contributes one Bernoulli outcome (link 1 or link 2 attempt) and,
    after a link-2 success, one swap outcome.  Probabilities stay exact when
    given as Fractions.
    """
    p1, p2, p_swap = (Fraction(x) for x in (p1, p2, p_swap))
    total = Fraction(0)
    # outcome alphabet per slot: 0 = attempt failed, 1 = link ok + swap ok, 2 = link ok + swap failed
    for seq in itertools.product((0, 1, 2), repeat=m):
        prob = Fraction(1)
        held = None  # failed link-2 attempts while holding link 1
        success = False
        for o in seq:
            if success:
                # remaining slots are irrelevant once a packet is made
                prob *= 1 if o == 0 else 0
                continue
            if held is None:
                if o == 2:
                    prob = Fraction(0)
                    break
                prob *= p1 if o == 1 else 1 - p1
                if o == 1:
                    held = 0
            else:
                if o == 0:
                    prob *= 1 - p2
                    held += 1
                    if held == w:
                        held = None
                elif o == 1:
                    prob *= p2 * p_swap
                    success = True
                else:
                    prob *= p2 * (1 - p_swap)
                    held = None
        if success:
            total += prob
    return total


def sample_packet_prob(m, p1, p2, p_swap, w, trials, rng):
    """Slot-by-slot vectorised Monte Carlo of the sequential scheme."""
    fresh = np.ones(trials, dtype=bool)
    age = np.zeros(trials, dtype=np.int64)
    done = np.zeros(trials, dtype=bool)
    for _ in range(m):
        u = rng.random(trials)
        v = rng.random(trials)
        live = ~done
        hold = live & ~fresh
        got2 = hold & (u < p2)
        swap_ok = got2 & (v < p_swap)
        done |= swap_ok
        back = (got2 & ~swap_ok) | (hold & ~got2 & (age + 1 >= w))
        age = np.where(hold & ~got2, age + 1, age)
        start = live & fresh & (u < p1)
        fresh = np.where(start, False, fresh)
        age = np.where(start, 0, age)
        fresh = np.where(back, True, fresh)
        age = np.where(back, 0, age)
    return done.mean()


def make_cap(pair=("A", "B"), E=10.0, p_pkt=1.0, resources=None):
    from gwrsim.capability import END_COMM, PathCapability, ResourceId

    if resources is None:
        resources = tuple(ResourceId(END_COMM, n, 0) for n in pair)
    return PathCapability(pair, tuple(resources), E, 1000, p_pkt, 5, E / 1000, 0.5, 0.5, 1.0)


def make_spec(pair=("A", "B"), n_min=10, expiry=1e6, mode="fixed", rate=0.001, start=0.0):
    from gwrsim.capability import UnifiedDemandSpec

    return UnifiedDemandSpec(pair, n_min, start, expiry, mode, rate)


def greedy_in_order(jobs):
    """Place jobs in the given order, each at its earliest conflict-free start."""
    busy = {}
    starts = []
    for j in jobs:
        s = j.release
        moved = True
        while moved:
            moved = False
            for r in j.resources:
                for a, b in busy.get(r, ()):
                    if a < s + j.duration and s < b:
                        s, moved = b, True
        if s + j.duration > j.deadline:
            return None
        for r in j.resources:
            busy.setdefault(r, []).append((s, s + j.duration))
        starts.append(s)
    return starts


def all_orderings_feasible(jobs):
    """True iff some processing order places every job inside its window.

    Any feasible non-preemptive schedule can be left-shifted in start order
    without breaking it, so trying every order with greedy placement is exact.
    """
    return any(greedy_in_order(p) is not None for p in itertools.permutations(jobs))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
