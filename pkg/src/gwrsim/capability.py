"""Network capabilities manager: node/link registry and path capability composition.

End-to-end capabilities are derived only from elementary-link parameters.  A
packet is produced by a sequential scheme inside one PGA block of ``m`` slots:
the first elementary link is generated (Bernoulli ``p1`` per slot), then the
second link must succeed within ``w`` slots (Bernoulli ``p2`` per slot) or the
first link is discarded, and finally the junction swap succeeds with
``p_swap``.  A failed swap consumes both links and the process restarts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from gwrsim.errors import (
    DisjointWindows,
    DuplicateNode,
    InvalidCounts,
    InvalidProbability,
    MismatchedPair,
    NoPath,
    SelfPair,
    UnknownNode,
    ZeroSlots,
)

END_NODE = "end_node"
JUNCTION = "junction"

END_COMM = "end_comm_qubit"
JUNCTION_COMM = "junction_comm_qubit"

FIXED = "fixed"
ADAPTIVE = "adaptive"


class ResourceId(NamedTuple):
    kind: str
    owner: str
    index: int

    def __str__(self):
        return f"{self.owner}/{self.kind}/{self.index}"


@dataclass(frozen=True)
class NodeInfo:
    node_id: str
    role: str
    comm_qubits: int
    memory_qubits: int = 0
    memory_lifetime: float = 1.0

    def validate(self):
        if self.role not in (END_NODE, JUNCTION):
            raise InvalidCounts(f"node {self.node_id}: unknown role {self.role!r}")
        if self.comm_qubits < 1:
            raise InvalidCounts(f"node {self.node_id}: comm_qubits must be >= 1")
        if self.role == JUNCTION and self.comm_qubits < 2:
            raise InvalidCounts(f"junction {self.node_id}: needs >= 2 comm qubits to swap")
        if self.memory_qubits < 0:
            raise InvalidCounts(f"node {self.node_id}: memory_qubits must be >= 0")
        if not self.memory_lifetime > 0:
            raise InvalidCounts(f"node {self.node_id}: memory_lifetime must be > 0")


@dataclass(frozen=True)
class LinkInfo:
    endpoints: frozenset
    slot_duration: float
    p_elem: float

    @classmethod
    def between(cls, a, b, slot_duration, p_elem):
        return cls(frozenset((a, b)), slot_duration, p_elem)


@dataclass(frozen=True)
class PathCapability:
    pair: tuple[str, str]
    path_resources: tuple[ResourceId, ...]
    E_pga: float
    slots_per_pga: int
    p_pkt: float
    cutoff_slots: int
    slot_duration: float
    p_link1: float
    p_link2: float
    p_swap: float


@dataclass(frozen=True)
class HalfDemand:
    origin: str
    peer: str
    n_min: int
    window: tuple[float, float]
    rate_mode: str = FIXED
    rate: float | None = None
    max_rate: float = math.inf

    def __post_init__(self):
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy t_earliest < t_expiry")
        if self.rate_mode == FIXED and not (self.rate is not None and self.rate > 0):
            raise ValueError("fixed-rate demand needs rate > 0")
        if self.rate_mode not in (FIXED, ADAPTIVE):
            raise ValueError(f"unknown rate mode {self.rate_mode!r}")


@dataclass(frozen=True)
class UnifiedDemandSpec:
    pair: tuple[str, str]
    n_min: int
    t_earliest: float
    t_expiry: float
    rate_mode: str
    rate: float | None
    max_rate: float = math.inf


@dataclass
class Registry:
    """Static registry of nodes and elementary links (single writer)."""

    p_swap: float = 0.5
    slots_per_pga: int = 1000
    nodes: dict[str, NodeInfo] = field(default_factory=dict)
    links: dict[frozenset, LinkInfo] = field(default_factory=dict)
    version: int = 0

    def register_node(self, info: NodeInfo) -> "Registry":
        if info.node_id in self.nodes:
            raise DuplicateNode(info.node_id)
        info.validate()
        self.nodes[info.node_id] = info
        return self

    def register_link(self, link: LinkInfo) -> "Registry":
        if len(link.endpoints) != 2:
            raise SelfPair("a link needs two distinct endpoints")
        for n in link.endpoints:
            if n not in self.nodes:
                raise UnknownNode(n)
        if link.endpoints in self.links:
            raise DuplicateNode(f"link {sorted(link.endpoints)} already registered")
        if not link.slot_duration > 0:
            raise InvalidCounts("slot_duration must be > 0")
        _check_prob("p_elem", link.p_elem, allow_zero=False)
        self.links[link.endpoints] = link
        return self

    def neighbours(self, node_id):
        """Neighbours in link registration order."""
        return [next(iter(ep - {node_id})) for ep in self.links if node_id in ep]

    def end_nodes(self):
        return sorted(n for n, info in self.nodes.items() if info.role == END_NODE)

    def __len__(self):
        return len(self.nodes)


def register_node(registry: Registry, info: NodeInfo) -> Registry:
    return registry.register_node(info)


def _check_prob(name, p, allow_zero=True):
    lo_ok = p >= 0 if allow_zero else p > 0
    if not (lo_ok and p <= 1):
        raise InvalidProbability(f"{name}={p!r} outside {'[0' if allow_zero else '(0'},1]")


def packet_success_prob(m: int, p1: float, p2: float, p_swap: float, w: int) -> float:
    """Probability that one packet completes within ``m`` slots.

    Dynamic programme over the slot state: either no link is held, or the first
    link is held and ``a`` second-link attempts have failed (``0 <= a < w``).
    """
    if m < 1:
        raise ZeroSlots(f"m={m}")
    if w < 1:
        raise ZeroSlots(f"cutoff w={w}")
    for name, p in (("p1", p1), ("p2", p2), ("p_swap", p_swap)):
        _check_prob(name, p)
    # a cutoff longer than the block can never trigger
    w = min(int(w), int(m))
    q1, q2 = 1.0 - p1, 1.0 - p2
    fresh = 1.0
    hold = np.zeros(w)
    done = 0.0
    for _ in range(int(m)):
        held = hold.sum()
        done += held * p2 * p_swap
        back = held * p2 * (1.0 - p_swap) + hold[-1] * q2
        hold[1:] = hold[:-1] * q2
        hold[0] = fresh * p1
        fresh = fresh * q1 + back
    return float(done)


def cutoff_slots(lifetime, slot_duration):
    # tolerance absorbs binary rounding of e.g. 0.03 / 0.01
    return int(math.floor(lifetime / slot_duration + 1e-9))


def _star_junction(registry, a, b):
    common = [
        j
        for j in registry.neighbours(a)
        if registry.nodes[j].role == JUNCTION and frozenset((j, b)) in registry.links
    ]
    if not common:
        raise NoPath(f"no junction connects {a} and {b}")
    return sorted(common)[0]


def _end_qubit(registry, node, peer):
    others = [n for n in registry.end_nodes() if n != node]
    return others.index(peer) % registry.nodes[node].comm_qubits


def _junction_qubit(registry, junction, node):
    return registry.neighbours(junction).index(node) % registry.nodes[junction].comm_qubits


def compose_path_capability(registry: Registry, pair) -> PathCapability:
    a, b = pair
    if a == b:
        raise SelfPair(a)
    for n in (a, b):
        if n not in registry.nodes:
            raise UnknownNode(n)
        if registry.nodes[n].role != END_NODE:
            raise NoPath(f"{n} is not an end node")
    a, b = sorted((a, b))
    j = _star_junction(registry, a, b)
    link1 = registry.links[frozenset((a, j))]
    link2 = registry.links[frozenset((j, b))]
    slot = max(link1.slot_duration, link2.slot_duration)
    lifetime = min(registry.nodes[n].memory_lifetime for n in (a, j, b))
    w = cutoff_slots(lifetime, slot)
    if w < 1:
        raise InvalidCounts(f"memory lifetime {lifetime} s shorter than one slot ({slot} s)")
    m = registry.slots_per_pga
    resources = (
        ResourceId(END_COMM, a, _end_qubit(registry, a, b)),
        ResourceId(JUNCTION_COMM, j, _junction_qubit(registry, j, a)),
        ResourceId(JUNCTION_COMM, j, _junction_qubit(registry, j, b)),
        ResourceId(END_COMM, b, _end_qubit(registry, b, a)),
    )
    return PathCapability(
        pair=(a, b),
        path_resources=resources,
        E_pga=m * slot,
        slots_per_pga=m,
        p_pkt=packet_success_prob(m, link1.p_elem, link2.p_elem, registry.p_swap, w),
        cutoff_slots=w,
        slot_duration=slot,
        p_link1=link1.p_elem,
        p_link2=link2.p_elem,
        p_swap=registry.p_swap,
    )


def negotiate(a: HalfDemand, b: HalfDemand) -> UnifiedDemandSpec:
    """Merge two half demands so the result satisfies both."""
    if a.peer != b.origin or b.peer != a.origin:
        raise MismatchedPair(f"{a.origin}->{a.peer} vs {b.origin}->{b.peer}")
    lo = max(a.window[0], b.window[0])
    hi = min(a.window[1], b.window[1])
    if not lo < hi:
        raise DisjointWindows(f"{a.window} and {b.window}")
    if a.rate_mode == ADAPTIVE and b.rate_mode == ADAPTIVE:
        mode, rate = ADAPTIVE, None
    else:
        mode = FIXED
        rate = min(h.rate for h in (a, b) if h.rate_mode == FIXED)
    return UnifiedDemandSpec(
        pair=(a.origin, a.peer),
        n_min=max(a.n_min, b.n_min),
        t_earliest=lo,
        t_expiry=hi,
        rate_mode=mode,
        rate=rate,
        max_rate=min(a.max_rate, b.max_rate),
    )


@dataclass(frozen=True)
class CapabilitySnapshot:
    version: int
    capabilities: dict

    def __getitem__(self, pair):
        return self.capabilities[tuple(sorted(pair))]

    def __len__(self):
        return len(self.capabilities)

    def same_capabilities(self, other):
        return self.capabilities == other.capabilities


def refresh_capabilities(registry: Registry, pairs: Iterable | None = None) -> CapabilitySnapshot:
    """Compose capabilities for ``pairs`` (default: every end-node pair).

    Parameters are static, so repeated refreshes differ only in ``version``.
    """
    if pairs is None:
        pairs = itertools.combinations(registry.end_nodes(), 2)
    caps = {}
    for pair in pairs:
        cap = compose_path_capability(registry, pair)
        caps[cap.pair] = cap
    registry.version += 1
    return CapabilitySnapshot(registry.version, dict(sorted(caps.items())))


def star_registry(
    clients=("C1", "C2", "C3", "C4", "C5"),
    server="S",
    junction="J",
    *,
    junction_comm=None,
    server_comm=1,
    memory_lifetime=0.5,
    slot_duration=0.01,
    p_elem=0.001,
    p_swap=0.5,
    slots_per_pga=10000,
) -> Registry:
    """Star topology: one junction, one server and a set of client end nodes."""
    ends = [server, *clients] if server is not None else list(clients)
    reg = Registry(p_swap=p_swap, slots_per_pga=slots_per_pga)
    reg.register_node(
        NodeInfo(junction, JUNCTION, junction_comm or max(2, len(ends)), 0, memory_lifetime)
    )
    for n in ends:
        comm = server_comm if n == server else 1
        reg.register_node(NodeInfo(n, END_NODE, comm, 1, memory_lifetime))
        reg.register_link(LinkInfo.between(junction, n, slot_duration, p_elem))
    return reg
