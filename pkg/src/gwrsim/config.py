"""Flat ``key = value`` configuration files with dotted section prefixes.

Topology lines::

    node.<id> = <role>, <comm_qubits>, <memory_qubits>, <memory_lifetime s>
    link.<a>.<b> = <slot_duration s>, <p_elem>
"""

from __future__ import annotations

import math
from dataclasses import replace
from importlib import resources
from pathlib import Path

from gwrsim.admission import AdmissionConfig
from gwrsim.capability import LinkInfo, NodeInfo, Registry, refresh_capabilities
from gwrsim.demand import POLICIES
from gwrsim.engine import DemandTemplate, EngineConfig, SimConfig
from gwrsim.errors import GwrError, InvariantViolation, ParseError

REQUIRED = (
    "engine.T_int",
    "engine.duration",
    "engine.lambda",
    "engine.pairs",
    "demand.n_min",
    "demand.rate_mode",
    "capability.slots_per_pga",
)

KNOWN = set(REQUIRED) | {
    "engine.offset_c",
    "engine.d_msg",
    "engine.seed",
    "demand.rate",
    "demand.horizon",
    "demand.max_rate",
    "capability.p_swap",
    "admission.u_max",
    "admission.compute_coeff_a",
    "admission.compute_coeff_b",
    "admission.beta",
    "admission.queue_policy",
    "admission.rate_cap",
}

QUEUE_ALIASES = {"skip": "skip_blocking"}


def default_config_path() -> Path:
    return Path(str(resources.files("gwrsim") / "data" / "default.cfg"))


def parse_text(text: str) -> dict:
    """Return ``{key: (value, line)}``; raises ParseError on malformed lines."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", n)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or " " in key:
            raise ParseError(f"bad key {key!r}", n)
        if key in out:
            raise ParseError(f"duplicate key {key!r} (first on line {out[key][1]})", n)
        if not (key in KNOWN or key.startswith("node.") or key.startswith("link.")):
            raise ParseError(f"unknown key {key!r}", n)
        out[key] = (value, n)
    return out


class _Fields:
    def __init__(self, kv):
        self.kv = kv

    def line(self, key):
        return self.kv[key][1] if key in self.kv else None

    def raw(self, key, default=None):
        if key not in self.kv:
            if default is _REQ:
                raise ParseError(f"missing required key {key!r}")
            return default
        return self.kv[key][0]

    def num(self, key, conv=float, default=None, optional_off=False):
        v = self.raw(key, default)
        if not isinstance(v, str):
            return v
        if optional_off and v.lower() in ("off", "none", "inf", "unbounded"):
            return None
        try:
            return conv(v)
        except ValueError:
            raise ParseError(f"{key}: cannot parse {v!r} as {conv.__name__}", self.line(key)) from None

    def check(self, ok, key, reason):
        if not ok:
            raise InvariantViolation(key, reason, self.line(key))


_REQ = object()


def _parse_pairs(f, key):
    pairs = []
    for item in f.raw(key, _REQ).split(","):
        item = item.strip()
        parts = item.split("-")
        if len(parts) != 2 or not all(parts):
            raise ParseError(f"{key}: bad pair {item!r}, expected A-B", f.line(key))
        pairs.append(tuple(parts))
    return tuple(pairs)


def _build_registry(f, kv, p_swap, slots):
    reg = Registry(p_swap=p_swap, slots_per_pga=slots)
    for key in sorted((k for k in kv if k.startswith("node.")), key=lambda k: kv[k][1]):
        n = kv[key][1]
        parts = key.split(".")
        vals = [v.strip() for v in kv[key][0].split(",")]
        if len(parts) != 2 or len(vals) != 4:
            raise ParseError(f"{key}: expected 'role, comm_qubits, memory_qubits, lifetime'", n)
        try:
            info = NodeInfo(parts[1], vals[0], int(vals[1]), int(vals[2]), float(vals[3]))
        except ValueError:
            raise ParseError(f"{key}: malformed node fields {kv[key][0]!r}", n) from None
        try:
            reg.register_node(info)
        except GwrError as e:
            raise InvariantViolation(key, str(e), n) from None
    for key in sorted((k for k in kv if k.startswith("link.")), key=lambda k: kv[k][1]):
        n = kv[key][1]
        parts = key.split(".")
        vals = [v.strip() for v in kv[key][0].split(",")]
        if len(parts) != 3 or len(vals) != 2:
            raise ParseError(f"{key}: expected link.<a>.<b> = slot_duration, p_elem", n)
        try:
            link = LinkInfo.between(parts[1], parts[2], float(vals[0]), float(vals[1]))
        except ValueError:
            raise ParseError(f"{key}: malformed link fields {kv[key][0]!r}", n) from None
        try:
            reg.register_link(link)
        except GwrError as e:
            raise InvariantViolation(key, str(e), n) from None
    return reg


def loads_config(text: str, overrides: dict | None = None) -> SimConfig:
    kv = parse_text(text)
    for k, v in (overrides or {}).items():
        if k not in KNOWN:
            raise ParseError(f"unknown override key {k!r}")
        kv[k] = (str(v), None)
    f = _Fields(kv)
    for key in REQUIRED:
        f.raw(key, _REQ)

    p_swap = f.num("capability.p_swap", float, 0.5)
    f.check(0 <= p_swap <= 1, "capability.p_swap", "must lie in [0, 1]")
    slots = f.num("capability.slots_per_pga", int, _REQ)
    f.check(slots >= 1, "capability.slots_per_pga", "must be >= 1")
    registry = _build_registry(f, kv, p_swap, slots)

    mode = f.raw("demand.rate_mode", _REQ)
    f.check(mode in ("fixed", "adaptive"), "demand.rate_mode", "must be fixed or adaptive")
    max_rate = f.num("demand.max_rate", float, None, optional_off=True)
    template = DemandTemplate(
        n_min=f.num("demand.n_min", int, _REQ),
        rate_mode=mode,
        rate=f.num("demand.rate", float, None, optional_off=True),
        horizon=f.num("demand.horizon", float, None, optional_off=True),
        max_rate=math.inf if max_rate is None else max_rate,
    )
    engine = EngineConfig(
        T_int=f.num("engine.T_int", float, _REQ),
        offset_c=f.num("engine.offset_c", int, 1),
        d_msg=f.num("engine.d_msg", float, 0.01),
        duration=f.num("engine.duration", float, _REQ),
        lam=f.num("engine.lambda", float, _REQ),
        pairs=_parse_pairs(f, "engine.pairs"),
        demand_template=template,
        seed=f.num("engine.seed", int, 0),
    )
    try:
        engine.validate()
    except InvariantViolation as e:
        key = e.field if e.field in kv else "engine.T_int"
        raise InvariantViolation(e.field, e.reason, f.line(key)) from None
    for a, b in engine.pairs:
        for node in (a, b):
            f.check(node in registry.nodes, "engine.pairs", f"unknown node {node!r}")

    policy = f.raw("admission.queue_policy", "fifo")
    policy = QUEUE_ALIASES.get(policy, policy)
    f.check(policy in POLICIES, "admission.queue_policy", "must be one of fifo, skip")
    u_max = f.num("admission.u_max", float, 0.9)
    f.check(0 < u_max <= 1, "admission.u_max", "must lie in (0, 1]")
    beta = f.num("admission.beta", float, 1.2)
    f.check(beta >= 1, "admission.beta", "must be >= 1")
    rate_cap = f.num("admission.rate_cap", float, None, optional_off=True)
    f.check(rate_cap is None or rate_cap > 0, "admission.rate_cap", "must be > 0 or off")
    b = f.num("admission.compute_coeff_b", float, 1.0)
    f.check(0 <= b < engine.compute_allowance, "admission.compute_coeff_b", "must lie in [0, allowance)")
    admission = AdmissionConfig(
        compute_allowance=engine.compute_allowance,
        u_max=u_max,
        compute_coeff_a=f.num("admission.compute_coeff_a", float, None),
        compute_coeff_b=b,
        beta=beta,
        queue_policy=policy,
        rate_cap=rate_cap,
    )
    config = SimConfig(engine, admission, registry)
    try:
        refresh_capabilities(registry, engine.pairs)
    except GwrError as e:
        raise InvariantViolation("engine.pairs", str(e), f.line("engine.pairs")) from None
    registry.version = 0
    return config


def load_config(path=None, overrides: dict | None = None) -> SimConfig:
    path = default_config_path() if path is None else Path(path)
    return loads_config(path.read_text(), overrides)


def with_run(config: SimConfig, lam=None, seed=None) -> SimConfig:
    """Copy of ``config`` with λ and/or seed replaced."""
    eng = config.engine
    if lam is not None:
        eng = replace(eng, lam=lam)
    if seed is not None:
        eng = replace(eng, seed=seed)
    return SimConfig(eng, config.admission, config.registry)
