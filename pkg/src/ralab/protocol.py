"""Context-id message flow for the two-step access procedure.

A device keeps a context id while suspended. The id deterministically maps
to a preamble id and an offset index, so the base station can shortlist
which devices could have sent a given preamble in a given slot and answer
each candidate with an individually addressed response. The module also
carries the four-step procedure's per-attempt state record used by the
simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import core
from .estimator import TrafficEstimate


class AllocationError(RuntimeError):
    """No free context id for the requested cell."""


@dataclass(frozen=True)
class ContextId:
    """Decimal context id with the procedure-selector flag.

    ``flag`` models the most significant bit of the encoded id: 0 means the
    device uses the two-step procedure, 1 the four-step one.
    """

    id: int
    flag: int = 0

    def __post_init__(self) -> None:
        if self.id < 1:
            raise ValueError("id must be >= 1 (zero is never assigned)")
        if self.flag not in (0, 1):
            raise ValueError("flag must be 0 or 1")

    @property
    def uses_twostep(self) -> bool:
        return self.flag == 0


def select_preamble(id_: int, n_total: int, n_cr: int) -> int:
    """Preamble id assigned to context id ``id_``.

    The two-step pool occupies the top ``n_cr`` preamble ids; ids cycle
    through it from the top down.
    """
    if id_ < 1:
        raise ValueError("id must be >= 1")
    if not 1 <= n_cr <= n_total:
        raise ValueError(f"n_cr must be in [1, {n_total}], got {n_cr!r}")
    return n_total - 1 - ((id_ - 1) % n_cr)


def select_offset_index(id_: int, n_cr: int, t_p: int) -> int:
    """Offset index (transmission slot class) assigned to ``id_``."""
    if id_ < 1:
        raise ValueError("id must be >= 1")
    if n_cr < 1:
        raise ValueError("n_cr must be >= 1")
    if t_p not in (1, 2, 3):
        raise ValueError(f"t_p must be in {{1, 2, 3}}, got {t_p!r}")
    return ((id_ - 1) % (n_cr * t_p)) // n_cr + 1


def cell_id(pid: int, t_ind: int, k: int, n_total: int, n_cr: int, t_p: int) -> int:
    """The ``k``-th context id (k >= 0) mapping to cell ``(pid, t_ind)``."""
    if not n_total - n_cr <= pid < n_total:
        raise ValueError("pid outside the two-step pool")
    if not 1 <= t_ind <= t_p:
        raise ValueError("t_ind out of range")
    if k < 0:
        raise ValueError("k must be >= 0")
    return 1 + (n_total - 1 - pid) + n_cr * (t_ind - 1) + n_cr * t_p * k


@dataclass
class UeRecord:
    """Registry row for one suspended device."""

    id: int
    pid: int
    t_ind: int
    traffic_kind: str  # "periodic" or "event"
    estimate: TrafficEstimate | None = None
    t0_last: float | None = None  # anchor time of the latest successful access
    # (the traffic analyzer's fitted reception time when an estimate is live,
    # otherwise the raw preamble reception time)


@dataclass
class FourStepState:
    """Attempt-level state of one four-step access procedure."""

    max_attempts: int = 10
    attempt: int = 0               # m; 0 means idle
    step: int = 0                  # n within the message exchange, 0 when idle
    ready_slot: int = 0            # earliest slot of the next preamble
    gen_slot: int = 0              # slot of the packet being served

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self._check()

    def _check(self) -> None:
        if not 0 <= self.attempt <= self.max_attempts:
            raise ValueError("attempt out of range")

    def start_attempt(self) -> int:
        """Advance to the next attempt; raises once the cap is hit."""
        if self.attempt >= self.max_attempts:
            raise ValueError("attempt cap reached")
        self.attempt += 1
        self.step = 1
        return self.attempt

    @property
    def exhausted(self) -> bool:
        return self.attempt >= self.max_attempts

    def reset(self) -> None:
        self.attempt = 0
        self.step = 0


class BsRegistry:
    """Base-station view: id -> record plus a (pid, t_ind) reverse index."""

    def __init__(
        self,
        n_total: int = 64,
        n_cr: int = 4,
        t_p: int = 3,
        ids_per_cell: int = 10,
    ) -> None:
        if not 0 <= n_cr <= n_total:
            raise ValueError("n_cr must be in [0, n_total]")
        if t_p not in (1, 2, 3):
            raise ValueError("t_p must be in {1, 2, 3}")
        if ids_per_cell < 1:
            raise ValueError("ids_per_cell must be >= 1")
        self.n_total = n_total
        self.n_cr = n_cr
        self.t_p = t_p
        self.ids_per_cell = ids_per_cell
        self.records: dict[int, UeRecord] = {}
        self._cells: dict[tuple[int, int], list[int]] = {}
        self.grew_capacity = False

    @property
    def reserved_pid(self) -> int:
        """Preamble id shared by all periodic-traffic devices."""
        return self.n_total - 1

    def event_pids(self) -> range:
        """Preamble ids available to event-traffic devices."""
        return range(self.n_total - self.n_cr, self.n_total - 1)

    def add(self, record: UeRecord) -> None:
        if record.id in self.records:
            raise ValueError(f"id {record.id} already registered")
        expect_pid = select_preamble(record.id, self.n_total, self.n_cr)
        expect_t_ind = select_offset_index(record.id, self.n_cr, self.t_p)
        if (record.pid, record.t_ind) != (expect_pid, expect_t_ind):
            raise ValueError(
                f"record ({record.pid}, {record.t_ind}) contradicts the id map "
                f"({expect_pid}, {expect_t_ind})"
            )
        self.records[record.id] = record
        self._cells.setdefault((record.pid, record.t_ind), []).append(record.id)

    def ids_for_cell(self, pid: int, t_ind: int) -> list[int]:
        return self._cells.get((pid, t_ind), [])

    def cell_load(self, pid: int, t_ind: int) -> int:
        return len(self._cells.get((pid, t_ind), ()))

    def check_consistent(self) -> None:
        """Assert the reverse index matches the forward map (test hook)."""
        rebuilt: dict[tuple[int, int], list[int]] = {}
        for id_, rec in self.records.items():
            assert rec.id == id_
            rebuilt.setdefault((rec.pid, rec.t_ind), []).append(id_)
        assert {k: sorted(v) for k, v in rebuilt.items()} == {
            k: sorted(v) for k, v in self._cells.items() if v
        }


def filter_candidates(registry: BsRegistry, pid: int, rx_slot: int) -> list[int]:
    """Ids that could have sent ``pid`` in ``rx_slot`` (shortlist step).

    Matches on the preamble id and on the slot class: the id's offset index
    must allow the frame slot of ``rx_slot``. An empty result is valid.
    """
    frame_slot = rx_slot % core.FRAME_LEN
    out: list[int] = []
    for t_ind in range(1, registry.t_p + 1):
        if frame_slot in core.allowed_slots(registry.t_p, t_ind):
            out.extend(registry.ids_for_cell(pid, t_ind))
    return sorted(out)


def rar_grant_decision(record: UeRecord, t: float) -> bool:
    """Whether the response to ``record`` should carry an uplink grant at ``t``.

    Event devices always get the grant. Periodic devices get it only when
    the next packet is plausibly due: ``t >= t0 + T - alpha`` with the
    estimated period ``T`` and margin ``alpha``. Without an estimate or a
    prior success the grant is always sent.
    """
    if record.traffic_kind == "event":
        return True
    est = record.estimate
    if est is None or est.kind != "periodic" or record.t0_last is None:
        return True
    return t >= record.t0_last + est.period_ms - est.margin_ms


def allocate_context_id(
    registry: BsRegistry,
    traffic_kind: str,
    preferred_offset: int | None = None,
    rng=None,
    policy: str = "uniform",
    allow_grow: bool = True,
) -> ContextId:
    """Allocate a fresh context id and register the device.

    Periodic devices share the reserved (highest) preamble and take the
    offset class ``preferred_offset`` chosen from their observed pattern.
    Event devices take one of the remaining ``n_cr - 1`` preambles: with
    ``policy="uniform"`` a uniformly random cell, with ``policy="balanced"``
    the least-loaded cell (ties to the smallest pid, then offset). Within a
    cell the smallest unused id is assigned.
    """
    n_total, n_cr, t_p = registry.n_total, registry.n_cr, registry.t_p
    if traffic_kind == "periodic":
        if n_cr < 1:
            raise AllocationError("no two-step pool configured")
        if preferred_offset is None or not 1 <= preferred_offset <= t_p:
            raise ValueError("periodic allocation needs a valid preferred_offset")
        pid, t_ind = registry.reserved_pid, preferred_offset
    elif traffic_kind == "event":
        if n_cr < 2:
            raise AllocationError("need n_cr >= 2 to serve event devices")
        if policy == "uniform":
            if rng is None:
                raise ValueError("uniform policy needs an rng")
            pid = n_total - n_cr + rng.randrange(n_cr - 1)
            t_ind = 1 + rng.randrange(t_p)
        elif policy == "balanced":
            pid, t_ind = min(
                ((p, k) for p in registry.event_pids() for k in range(1, t_p + 1)),
                key=lambda cell: (registry.cell_load(*cell), cell[0], cell[1]),
            )
        else:
            raise ValueError(f"unknown policy {policy!r}")
    else:
        raise ValueError(f"traffic_kind must be 'periodic' or 'event', got {traffic_kind!r}")

    used = {
        (i - 1) // (n_cr * t_p) for i in registry.ids_for_cell(pid, t_ind)
    }
    k = 0
    while k in used:
        k += 1
    if k >= registry.ids_per_cell:
        if not allow_grow:
            raise AllocationError(f"cell ({pid}, {t_ind}) is full")
        registry.grew_capacity = True
    id_ = cell_id(pid, t_ind, k, n_total, n_cr, t_p)
    registry.add(UeRecord(id=id_, pid=pid, t_ind=t_ind, traffic_kind=traffic_kind))
    return ContextId(id=id_, flag=0)
