"""Per-demand records, run summaries, the queue-time baseline and λ sweeps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

from scipy.stats import spearmanr

from gwrsim.demand import TERMINAL, DemandState
from gwrsim.errors import EmptyInput, InsufficientPoints

MINIMAL = DemandState.MINIMAL_SERVICE.value


@dataclass(frozen=True)
class DemandRecord:
    demand_id: int
    pair: tuple
    t_submit: float
    t_admitted: float | None
    t_terminal: float | None
    terminal_state: str
    n_min: int
    n_done: int
    t_queue: float | None
    response_time: float | None
    packet_times: tuple
    rate_mode: str
    rate_attempt: float | None

    @classmethod
    def from_demand(cls, d) -> "DemandRecord":
        admitted = d.t_admitted
        return cls(
            demand_id=d.demand_id,
            pair=tuple(d.pair),
            t_submit=d.t_submit,
            t_admitted=admitted,
            t_terminal=d.t_terminal,
            terminal_state=str(d.state),
            n_min=d.n_min,
            n_done=d.n_done,
            t_queue=None if admitted is None else admitted - d.t_submit,
            response_time=d.packet_times[0] - d.t_submit if d.packet_times else None,
            packet_times=tuple(d.packet_times),
            rate_mode=d.rate_mode,
            rate_attempt=d.rate_attempt if admitted is not None else None,
        )

    @property
    def is_terminal(self) -> bool:
        return self.terminal_state in {s.value for s in TERMINAL}


RECORD_COLUMNS = [f.name for f in fields(DemandRecord)]


def jitter(packet_times) -> float | None:
    """Population std of consecutive delivery gaps; None below three packets."""
    if len(packet_times) < 3:
        return None
    gaps = [b - a for a, b in zip(packet_times, packet_times[1:])]
    return _pstd(gaps)


def _mean(xs):
    return math.fsum(xs) / len(xs)


def _pstd(xs):
    # fsum keeps the result independent of input order
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))


@dataclass(frozen=True)
class Summary:
    registered_count: int
    minimal_count: int
    admitted_count: int
    active_count: int
    proportion_minimal_registered: float
    proportion_minimal_admitted: float
    mean_t_queue: float | None
    std_t_queue: float | None
    mean_response_time: float | None
    mean_jitter: float | None
    pga_placed: int = 0
    pga_dropped: int = 0


def aggregate(records: Sequence[DemandRecord], pga_placed=0, pga_dropped=0) -> Summary:
    """Summarise terminal demands; demands still active are only counted."""
    done = [r for r in records if r.is_terminal]
    if not done:
        raise EmptyInput("no registered demand reached a terminal state")
    minimal = sum(r.terminal_state == MINIMAL for r in done)
    admitted = sum(r.t_admitted is not None for r in done)
    queue = [r.t_queue for r in done if r.t_queue is not None]
    resp = [r.response_time for r in done if r.response_time is not None]
    jit = [j for j in (jitter(r.packet_times) for r in done) if j is not None]
    return Summary(
        registered_count=len(done),
        minimal_count=minimal,
        admitted_count=admitted,
        active_count=len(records) - len(done),
        proportion_minimal_registered=minimal / len(done),
        proportion_minimal_admitted=minimal / admitted if admitted else 0.0,
        mean_t_queue=_mean(queue) if queue else None,
        std_t_queue=_pstd(queue) if queue else None,
        mean_response_time=_mean(resp) if resp else None,
        mean_jitter=_mean(jit) if jit else None,
        pga_placed=pga_placed,
        pga_dropped=pga_dropped,
    )


def baseline_queue_time(config) -> float:
    """Expected queue time of a lone pair: uniform arrivals wait for the next boundary."""
    t_int = getattr(config, "T_int", config)
    return t_int / 2


def boundary_wait(t_arrival: float, t_int: float) -> float:
    """Wait until the next controller cycle; arrivals on a boundary wait 0."""
    return math.ceil(t_arrival / t_int) * t_int - t_arrival


# -- sweep -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    lam: float
    n_seeds: int
    registered: int
    proportion_minimal_registered: float
    proportion_minimal_admitted: float
    mean_t_queue: float | None
    std_t_queue: float | None
    mean_response_time: float | None
    mean_jitter: float | None


@dataclass
class SweepReport:
    rows: list
    rho_t_queue: float
    rho_proportion: float
    verdicts: dict = field(default_factory=dict)

    @property
    def queue_time_increases(self) -> bool:
        return self.rho_t_queue > 0.9

    @property
    def service_decreases(self) -> bool:
        return self.rho_proportion < 0


def _seed_mean(values):
    vals = [v for v in values if v is not None]
    return _mean(vals) if vals else None


def _trend(xs, ys):
    pts = [(x, y) for x, y in zip(xs, ys) if y is not None]
    if len(pts) < 2 or len({y for _, y in pts}) == 1:
        return 0.0, "flat"
    rho = float(spearmanr([p[0] for p in pts], [p[1] for p in pts]).statistic)
    if rho > 0:
        return rho, "increasing"
    if rho < 0:
        return rho, "decreasing"
    return rho, "flat"


def sweep_report(summaries: Mapping[float, Summary | Sequence[Summary]]) -> SweepReport:
    """Seed-averaged rows ordered by λ, plus Spearman trend verdicts.

    Proportions are pooled over seeds; time statistics are seed means.
    """
    if len(summaries) < 2:
        raise InsufficientPoints("a sweep needs at least two λ values")
    rows = []
    for lam in sorted(summaries):
        group = summaries[lam]
        if isinstance(group, Summary):
            group = [group]
        reg = sum(s.registered_count for s in group)
        adm = sum(s.admitted_count for s in group)
        mini = sum(s.minimal_count for s in group)
        rows.append(
            SweepRow(
                lam=lam,
                n_seeds=len(group),
                registered=reg,
                proportion_minimal_registered=mini / reg,
                proportion_minimal_admitted=mini / adm if adm else 0.0,
                mean_t_queue=_seed_mean(s.mean_t_queue for s in group),
                std_t_queue=_seed_mean(s.std_t_queue for s in group),
                mean_response_time=_seed_mean(s.mean_response_time for s in group),
                mean_jitter=_seed_mean(s.mean_jitter for s in group),
            )
        )
    lams = [r.lam for r in rows]
    rho_q, v_q = _trend(lams, [r.mean_t_queue for r in rows])
    rho_p, v_p = _trend(lams, [r.proportion_minimal_registered for r in rows])
    return SweepReport(rows, rho_q, rho_p, {"t_queue": v_q, "proportion_minimal": v_p})


# -- serialisation -------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _opt_float(s):
    return None if s == "" else float(s)


def write_records(records, fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow(
            [
                r.demand_id,
                "-".join(r.pair),
                _fmt(r.t_submit),
                _fmt(r.t_admitted),
                _fmt(r.t_terminal),
                r.terminal_state,
                r.n_min,
                r.n_done,
                _fmt(r.t_queue),
                _fmt(r.response_time),
                ";".join(repr(t) for t in r.packet_times),
                r.rate_mode,
                _fmt(r.rate_attempt),
            ]
        )
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_records(text: str) -> list[DemandRecord]:
    rows = csv.DictReader(io.StringIO(text))
    out = []
    for row in rows:
        out.append(
            DemandRecord(
                demand_id=int(row["demand_id"]),
                pair=tuple(row["pair"].split("-")),
                t_submit=float(row["t_submit"]),
                t_admitted=_opt_float(row["t_admitted"]),
                t_terminal=_opt_float(row["t_terminal"]),
                terminal_state=row["terminal_state"],
                n_min=int(row["n_min"]),
                n_done=int(row["n_done"]),
                t_queue=_opt_float(row["t_queue"]),
                response_time=_opt_float(row["response_time"]),
                packet_times=tuple(float(t) for t in row["packet_times"].split(";") if t),
                rate_mode=row["rate_mode"],
                rate_attempt=_opt_float(row["rate_attempt"]),
            )
        )
    return out


def write_summary(summary: Summary) -> str:
    lines = []
    for f in fields(Summary):
        v = getattr(summary, f.name)
        lines.append(f"{f.name} = {'none' if v is None else _fmt(v)}")
    return "\n".join(lines) + "\n"


def read_summary(text: str) -> Summary:
    kv = {}
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        k, _, v = line.partition("=")
        kv[k.strip()] = v.strip()
    vals = {}
    for f in fields(Summary):
        raw = kv[f.name]
        if raw == "none":
            vals[f.name] = None
        elif f.name.endswith("_count") or f.name.startswith("pga_"):
            vals[f.name] = int(raw)
        else:
            vals[f.name] = float(raw)
    return Summary(**vals)


SWEEP_COLUMNS = [f.name for f in fields(SweepRow)]


def write_sweep(report: SweepReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(getattr(r, c)) for c in SWEEP_COLUMNS])
    buf.write(f"# rho_t_queue = {report.rho_t_queue!r} ({report.verdicts['t_queue']})\n")
    buf.write(
        f"# rho_proportion_minimal = {report.rho_proportion!r} "
        f"({report.verdicts['proportion_minimal']})\n"
    )
    return buf.getvalue()


def write_schedule(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["interval_index", "demand_id", "start", "duration", "resources"])
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def plot_sweep(report: SweepReport, out_dir, baseline=None):
    """Write SVG plots of service proportion and queue time against λ."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    out_dir = Path(out_dir)
    lams = [r.lam for r in report.rows]
    meta = {"Date": None}

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(lams, [r.proportion_minimal_registered for r in report.rows], "o-")
    ax.set_xscale("log")
    ax.set_xlabel("session renewal rate λ [Hz]")
    ax.set_ylabel("proportion with minimal service")
    fig.tight_layout()
    fig.savefig(out_dir / "minimal_service.svg", metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    pts = [(r.lam, r.mean_t_queue, r.std_t_queue or 0.0) for r in report.rows if r.mean_t_queue is not None]
    if pts:
        x, m, s = zip(*pts)
        ax.plot(x, m, "o-")
        ax.fill_between(x, [a - b for a, b in zip(m, s)], [a + b for a, b in zip(m, s)], alpha=0.3)
    if baseline is not None:
        ax.axhline(baseline, color="red", linestyle=":")
    ax.set_xscale("log")
    ax.set_xlabel("session renewal rate λ [Hz]")
    ax.set_ylabel("mean queue time [s]")
    fig.tight_layout()
    fig.savefig(out_dir / "queue_time.svg", metadata=meta)
    plt.close(fig)
