"""Slot-driven Monte Carlo engine for both random-access procedures.

The engine advances one transmission slot at a time and keeps three event
tables keyed by slot index: packet arrivals, preamble transmissions, and
administrative events (context allocation, observation-timer expiry).
Everything a run produces lands in a :class:`~ralab.metrics.MetricsReport`.

Conventions (times in ms, slots are ``t_tti`` wide):

* a packet arriving in slot ``g`` is stamped mid-slot, ``A = g*t_tti + t_tti/2``;
* a preamble sent in slot ``s`` is received at ``(s+1)*t_tti``, which is also
  the time the grant rule is evaluated at;
* a successful two-step access delivers the uplink packet at
  ``s*t_tti + total_twostep - t_tti/2`` (6.25 ms after the preamble slot
  start under defaults), the four-step equivalent uses the four-step total;
* deliveries over an already-established connection complete at
  ``A + t_up + t_tti/2``;
* a device stays connected until ``t_inactive`` after its last delivery.
"""

from __future__ import annotations

import heapq
import math
from random import Random

from . import core, estimator, protocol
from .metrics import MetricsReport
from .scenario import Scenario

CLASS_TWOSTEP_PERIODIC = "twostep_periodic"
CLASS_TWOSTEP_EVENT = "twostep_event"
CLASS_FOURSTEP = "fourstep"


class _Ue:
    """Mutable per-device state; one instance per simulated device."""

    __slots__ = (
        "uid", "true_kind", "procedure", "cls",
        "period_ms", "rate_per_ms", "next_arrival_ms",
        "est", "record", "pid", "t_ind",
        "connected_until", "in_ra", "attempt", "trigger_arrival", "queue",
        "threshold",
    )

    def __init__(self, uid: int, true_kind: str, procedure: str, cls: str) -> None:
        self.uid = uid
        self.true_kind = true_kind
        self.procedure = procedure
        self.cls = cls
        self.period_ms = 0.0
        self.rate_per_ms = 0.0
        self.next_arrival_ms = 0.0
        self.est: estimator.EstimatorState | None = None
        self.record: protocol.UeRecord | None = None
        self.pid = -1
        self.t_ind = 0
        self.connected_until = -math.inf
        self.in_ra = False
        self.attempt = 0
        self.trigger_arrival = 0.0
        self.queue: list[float] = []
        self.threshold = -math.inf


class _Engine:
    def __init__(self, sc: Scenario, seed: int) -> None:
        self.sc = sc
        self.rng = Random(seed)
        self.t_tti = sc.t_tti_ms
        self.half = sc.t_tti_ms / 2.0
        self.n_slots = sc.duration_slots
        self.report = MetricsReport(duration_ms=sc.duration_ms, seeds=(seed,))
        self.report.populations = {
            CLASS_TWOSTEP_PERIODIC: sc.twostep_n_periodic,
            CLASS_TWOSTEP_EVENT: sc.twostep_n_event,
            CLASS_FOURSTEP: sc.fourstep_n_ue,
        }
        self.cm = {
            name: self.report.class_metrics(name)
            for name in (CLASS_TWOSTEP_PERIODIC, CLASS_TWOSTEP_EVENT, CLASS_FOURSTEP)
        }

        # timing offsets, all in whole slots unless suffixed _ms
        self.rar_expiry_slots = 1 + math.ceil(sc.rar_window_ms / self.t_tti)
        self.backoff_slots_max = round(2.0 * sc.backoff_avg_ms / self.t_tti)
        msg_exchange_ms = self.half + core.CP_TWOSTEP_MS  # preamble..msg3 sent
        self.conres_known_slots = math.ceil(
            (msg_exchange_ms + sc.conres_timer_ms) / self.t_tti
        )
        self.two_delivery_ms = core.TOTAL_TWOSTEP_MS - self.half
        self.four_delivery_ms = core.TOTAL_FOURSTEP_MS - self.half

        self.registry = protocol.BsRegistry(
            n_total=sc.n_total, n_cr=sc.n_cr, t_p=sc.t_p,
            ids_per_cell=sc.ids_per_cell,
        )
        self.reserved_pid = self.registry.reserved_pid
        # class index of each frame slot (0 = no transmission class)
        self.slot_class = [0] * core.FRAME_LEN
        for k in range(1, sc.t_p + 1):
            for fs in core.allowed_slots(sc.t_p, k):
                self.slot_class[fs] = k
        # (pid, t_ind) -> devices registered there (event / always-grant cells)
        self.cells: dict[tuple[int, int], list[_Ue]] = {}
        # t_ind -> heap of (threshold, uid, ue) for gated periodic devices
        self.pu_heaps: dict[int, list[tuple[float, int, _Ue]]] = {
            k: [] for k in range(1, sc.t_p + 1)
        }

        self.arrivals: dict[int, list[_Ue]] = {}
        self.tx: dict[int, list[_Ue]] = {}
        self.admin: dict[int, list[tuple[str, _Ue]]] = {}
        self.ues: list[_Ue] = []
        self._build_population()

    # ------------------------------------------------------------------
    # population setup

    def _build_population(self) -> None:
        sc = self.sc
        uid = 0
        for _ in range(sc.twostep_n_periodic):
            ue = _Ue(uid, "periodic", "twostep", CLASS_TWOSTEP_PERIODIC)
            ue.period_ms = sc.twostep_period_ms
            ue.next_arrival_ms = self.rng.uniform(0.0, sc.twostep_period_ms)
            self._setup_twostep(ue)
            self._schedule_arrival(ue)
            self.ues.append(ue)
            uid += 1
        rate_ms = sc.twostep_event_rate_per_s / 1000.0
        for _ in range(sc.twostep_n_event):
            ue = _Ue(uid, "event", "twostep", CLASS_TWOSTEP_EVENT)
            ue.rate_per_ms = rate_ms
            ue.next_arrival_ms = self.rng.expovariate(rate_ms)
            self._setup_twostep(ue)
            self._schedule_arrival(ue)
            self.ues.append(ue)
            uid += 1
        four_rate_ms = sc.fourstep_rate_per_s / 1000.0
        for _ in range(sc.fourstep_n_ue):
            ue = _Ue(uid, "event", "fourstep", CLASS_FOURSTEP)
            ue.rate_per_ms = four_rate_ms
            ue.next_arrival_ms = self.rng.expovariate(four_rate_ms)
            self._schedule_arrival(ue)
            self.ues.append(ue)
            uid += 1

    def _setup_twostep(self, ue: _Ue) -> None:
        sc = self.sc
        if sc.estimator_mode == "on":
            ue.est = estimator.EstimatorState()
            expiry_slot = math.ceil(sc.t_initial_ms / self.t_tti)
            self.admin.setdefault(expiry_slot, []).append(("expiry", ue))
            return
        if sc.estimator_mode == "oracle" and ue.true_kind == "periodic":
            est = estimator.TrafficEstimate(
                kind="periodic",
                period_ms=ue.period_ms,
                intercept_ms=ue.next_arrival_ms,
                margin_ms=0.0,
                diff_variance=0.0,
                preferred_offset=self._oracle_offset(ue),
            )
        else:
            # "off" treats every two-step device as event traffic
            est = estimator.TrafficEstimate(kind="event")
        self._allocate(ue, est)

    def _oracle_offset(self, ue: _Ue) -> int:
        """The offset class an exact observer of the pattern would pick."""
        stamps = []
        for i in range(self.sc.r_threshold):
            g = int((ue.next_arrival_ms + i * ue.period_ms) / self.t_tti)
            stamps.append((g + 2) * self.t_tti)
        return estimator.preferred_offset(stamps, self.sc.t_p, self.t_tti)

    def _allocate(self, ue: _Ue, est: estimator.TrafficEstimate) -> None:
        cid = protocol.allocate_context_id(
            self.registry,
            est.kind,
            preferred_offset=est.preferred_offset if est.kind == "periodic" else None,
            policy="balanced",
        )
        record = self.registry.records[cid.id]
        record.estimate = est
        ue.record = record
        ue.pid = record.pid
        ue.t_ind = record.t_ind
        if est.kind == "periodic" and self.sc.estimator_mode == "on":
            ue.threshold = -math.inf
            heapq.heappush(self.pu_heaps[ue.t_ind], (ue.threshold, ue.uid, ue))
        elif est.kind != "periodic":
            self.cells.setdefault((ue.pid, ue.t_ind), []).append(ue)
        # oracle-mode periodic devices need no lookup structure: the grant
        # decision falls out of exact knowledge of who is transmitting

    # ------------------------------------------------------------------
    # scheduling helpers

    def _schedule_arrival(self, ue: _Ue) -> None:
        slot = int(ue.next_arrival_ms / self.t_tti)
        if slot < self.n_slots:
            self.arrivals.setdefault(slot, []).append(ue)

    def _schedule_tx(self, ue: _Ue, slot: int) -> None:
        if slot < self.n_slots:
            self.tx.setdefault(slot, []).append(ue)
        # beyond the horizon the packet stays pending

    def _first_tx_slot(self, ue: _Ue, earliest: int) -> int:
        if ue.procedure == "twostep":
            return core.next_tx_slot(earliest, self.sc.t_p, ue.t_ind)
        return earliest

    # ------------------------------------------------------------------
    # deliveries

    def _deliver_ra(self, ue: _Ue, delivery_ms: float) -> None:
        cm = self.cm[ue.cls]
        cm.add_ra_sample(delivery_ms - ue.trigger_arrival)
        for arrival in ue.queue:
            connected = max(delivery_ms, arrival + self.sc.t_up_ms + self.half)
            cm.add_connected_sample(connected - arrival)
        ue.queue.clear()
        ue.in_ra = False
        ue.attempt = 0
        ue.connected_until = delivery_ms + self.sc.t_inactive_ms

    def _deliver_connected(self, ue: _Ue, arrival_ms: float) -> float:
        delivery = arrival_ms + self.sc.t_up_ms + self.half
        self.cm[ue.cls].add_connected_sample(delivery - arrival_ms)
        ue.connected_until = delivery + self.sc.t_inactive_ms
        return delivery

    def _fail_packet(self, ue: _Ue, known_slot: int) -> None:
        """Attempt cap hit: drop the packet being served, serve the queue."""
        cm = self.cm[ue.cls]
        cm.failed += 1
        if ue.queue:
            ue.trigger_arrival = ue.queue.pop(0)
            ue.attempt = 1
            self._schedule_tx(ue, self._first_tx_slot(ue, known_slot))
        else:
            ue.in_ra = False
            ue.attempt = 0

    # ------------------------------------------------------------------
    # per-slot event handlers

    def _handle_admin(self, events: list[tuple[str, _Ue]]) -> None:
        for kind, ue in events:
            if kind == "alloc":
                self._allocate(ue, ue.est.estimate)
            elif kind == "expiry":
                if ue.est is not None and ue.est.phase == "initial":
                    est = estimator.classify_traffic_type(
                        ue.est, self.sc.r_threshold, self.sc.var_threshold,
                        self.sc.t_p, self.t_tti, timer_expired=True,
                    )
                    self.report.classification[f"{ue.true_kind}_as_{est.kind}"] += 1
                    self._allocate(ue, est)

    def _handle_arrival(self, ue: _Ue, slot: int) -> None:
        sc = self.sc
        arrival = slot * self.t_tti + self.half
        self.cm[ue.cls].generated += 1
        if ue.est is not None and ue.est.phase == "initial":
            delivery = self._deliver_connected(ue, arrival)
            estimator.observe_uplink_packet(ue.est, delivery, sc.t_up_ms, self.t_tti)
            if ue.est.r >= sc.r_threshold:
                est = estimator.classify_traffic_type(
                    ue.est, sc.r_threshold, sc.var_threshold, sc.t_p, self.t_tti,
                )
                self.report.classification[f"{ue.true_kind}_as_{est.kind}"] += 1
                alloc_slot = math.ceil((delivery + sc.t_inactive_ms) / self.t_tti)
                self.admin.setdefault(max(alloc_slot, slot + 1), []).append(("alloc", ue))
        elif ue.procedure == "twostep" and ue.record is None:
            # classified, context not granted yet: still on the initial connection
            self._deliver_connected(ue, arrival)
        elif ue.in_ra:
            ue.queue.append(arrival)
        elif arrival <= ue.connected_until:
            self._deliver_connected(ue, arrival)
        else:
            ue.in_ra = True
            ue.attempt = 1
            ue.trigger_arrival = arrival
            self._schedule_tx(ue, self._first_tx_slot(ue, slot + 1))
        # next packet of this device's process
        if ue.true_kind == "periodic" and ue.procedure == "twostep":
            ue.next_arrival_ms += ue.period_ms
        else:
            ue.next_arrival_ms += self.rng.expovariate(ue.rate_per_ms)
        self._schedule_arrival(ue)

    def _retry_twostep(self, ue: _Ue, s: int) -> None:
        known = s + self.rar_expiry_slots
        if ue.attempt >= self.sc.max_attempts:
            self._fail_packet(ue, known)
        else:
            ue.attempt += 1
            self._schedule_tx(ue, core.next_tx_slot(known, self.sc.t_p, ue.t_ind))

    def _retry_fourstep(self, ue: _Ue, s: int, msg3_collision: bool) -> None:
        known = s + (self.conres_known_slots if msg3_collision else self.rar_expiry_slots)
        if ue.attempt >= self.sc.max_attempts:
            self._fail_packet(ue, known)
        else:
            ue.attempt += 1
            self._schedule_tx(ue, known + self.rng.randint(0, self.backoff_slots_max))

    def _handle_tx(self, txs: list[_Ue], s: int) -> None:
        two_groups: dict[int, list[_Ue]] = {}
        four_groups: dict[int, list[tuple[_Ue, bool]]] = {}
        perfect = self.sc.detection == "perfect"
        for ue in txs:
            if ue.procedure == "twostep":
                two_groups.setdefault(ue.pid, []).append(ue)
            else:
                pid = self.sc.n_cf + self.rng.randrange(self.sc.n_cb)
                detected = perfect or self.rng.random() < -math.expm1(-ue.attempt)
                four_groups.setdefault(pid, []).append((ue, detected))
        if two_groups:
            self._resolve_twostep(two_groups, s, perfect)
        for group in four_groups.values():
            self._resolve_fourstep(group, s)

    def _resolve_twostep(self, groups: dict[int, list[_Ue]], s: int, perfect: bool) -> None:
        t_rar = (s + 1) * self.t_tti
        k = self.slot_class[s % core.FRAME_LEN]
        delivery = s * self.t_tti + self.two_delivery_ms
        for pid, ues in groups.items():
            if perfect:
                detected = True
            else:
                load = sum(ue.attempt for ue in ues)
                detected = self.rng.random() < -math.expm1(-load)
            if not detected:
                for ue in ues:
                    self.cm[ue.cls].unnec_failed += 1
                    self._retry_twostep(ue, s)
                continue
            transmitting = {ue.uid for ue in ues}
            granted: set[int] = set()
            if pid == self.reserved_pid and self.sc.estimator_mode == "on":
                self._grant_due_periodic(k, t_rar, transmitting, granted)
            elif pid == self.reserved_pid and self.sc.estimator_mode == "oracle":
                granted = transmitting  # exact schedule knowledge, no extras
            else:
                for member in self.cells.get((pid, k), ()):
                    granted.add(member.uid)
                    if member.uid not in transmitting:
                        cm = self.cm[member.cls]
                        cm.unnec_rar += 1
                        cm.unnec_grant += 1
            for ue in ues:
                if ue.uid in granted:
                    self.cm[ue.cls].necessary += 2
                    ue.record.t0_last = t_rar
                    self._refresh_periodic(ue, t_rar)
                    self._deliver_ra(ue, delivery)
                else:
                    # response withheld by the grant rule; looks like a miss
                    self.cm[ue.cls].unnec_failed += 1
                    self._retry_twostep(ue, s)

    def _grant_due_periodic(
        self, k: int, t_rar: float, transmitting: set[int], granted: set[int]
    ) -> None:
        """Grant every registered periodic device currently due in class ``k``."""
        heap = self.pu_heaps[k]
        repush = []
        while heap and heap[0][0] <= t_rar:
            threshold, uid, ue = heapq.heappop(heap)
            if threshold != ue.threshold or uid in granted:
                continue  # superseded by a newer entry
            granted.add(uid)
            if uid not in transmitting:
                cm = self.cm[ue.cls]
                cm.unnec_rar += 1
                cm.unnec_grant += 1
                repush.append((threshold, uid, ue))
            # transmitting devices get a fresh entry after their success
        for entry in repush:
            heapq.heappush(heap, entry)

    def _refresh_periodic(self, ue: _Ue, t_rar: float) -> None:
        est = ue.record.estimate
        if est is None or est.kind != "periodic" or self.sc.estimator_mode != "on":
            return
        estimator.observe_twostep_attempt(ue.est, t_rar, True)
        # Anchor the next-grant window on the fitted reception time rather
        # than the raw one: a retry-delayed success then shifts the anchor by
        # its leverage share only, so one late sample cannot drag every later
        # window behind the device's actual schedule.
        ue.record.t0_last = est.anchor_ms
        ue.threshold = est.anchor_ms + est.period_ms - est.margin_ms
        heapq.heappush(self.pu_heaps[ue.t_ind], (ue.threshold, ue.uid, ue))

    def _resolve_fourstep(self, group: list[tuple[_Ue, bool]], s: int) -> None:
        detected = [ue for ue, det in group if det]
        collision = len(detected) >= 2
        delivery = s * self.t_tti + self.four_delivery_ms
        for ue, det in group:
            cm = self.cm[ue.cls]
            if not det:
                cm.unnec_failed += 1
                self._retry_fourstep(ue, s, msg3_collision=False)
            elif collision:
                # preamble, response and resume request all wasted
                cm.unnec_failed += 3
                self._retry_fourstep(ue, s, msg3_collision=True)
            else:
                cm.necessary += 4
                self._deliver_ra(ue, delivery)

    # ------------------------------------------------------------------

    def run(self) -> MetricsReport:
        for slot in range(self.n_slots):
            events = self.admin.pop(slot, None)
            if events is not None:
                self._handle_admin(events)
            arrivals = self.arrivals.get(slot)
            if arrivals is not None:
                i = 0
                while i < len(arrivals):  # same-slot re-arrivals append here
                    self._handle_arrival(arrivals[i], slot)
                    i += 1
                del self.arrivals[slot]
            txs = self.tx.pop(slot, None)
            if txs is not None:
                self._handle_tx(txs, slot)
        self._finish()
        return self.report

    def _finish(self) -> None:
        for ue in self.ues:
            if ue.in_ra:
                self.cm[ue.cls].pending += 1 + len(ue.queue)
        for ue in self.ues:
            if (
                ue.true_kind == "periodic"
                and ue.est is not None
                and ue.est.estimate is not None
                and ue.est.estimate.kind == "periodic"
            ):
                self.report.period_estimates.append(ue.est.estimate.period_ms)
                self.report.margin_estimates.append(ue.est.estimate.margin_ms)
        self.report.registry_grew = self.registry.grew_capacity
        self.report.check_conservation()


def run_scenario(sc: Scenario, seed: int | None = None) -> MetricsReport:
    """Simulate one scenario with one seed and return its report."""
    return _Engine(sc, sc.seed if seed is None else seed).run()
