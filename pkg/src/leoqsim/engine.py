"""Discrete-event core: virtual clock, event queue, per-satellite receive /
rate-account / schedule / forward / transmit pipeline, slot timers, and the
route-update reactions to busy/idle notifications.

Packet lifecycle: user arrival -> uplink propagation -> source satellite
enqueue (counted toward the arrival-rate estimate) -> PQWRR service ->
forwarding decision -> per-link transmission and propagation -> next
satellite (hop += 1) -> ... -> downlink when the current satellite is the
destination's access satellite. Every event is ordered by (time, sequence),
so a (scenario, seed) pair fully determines every output.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from typing import Optional

from .congestion import CongestionLabel, NodeCongestionState
from .constellation import (
    EARTH_RADIUS_KM,
    EARTH_ROTATION_RAD_S,
    SPEED_OF_LIGHT_KM_S,
    AccessResolver,
    build_topology_snapshot,
)
from .routing import compute_backup_table, compute_shortest_path_table, decide_next_index
from .scenario import ScenarioConfig
from .scheduling import DropReason, DropRecord, PqwrrScheduler
from .stats import SimulationReport, StatsCollector
from .traffic import ArrivalGenerator, ContinentRatioTable, Packet

# Event kinds, dispatched positionally: (time, seq, kind, a, b)
_EV_SOURCE = 0  # a packet is created at its source user; b unused
_EV_UPLINK = 1  # packet reaches its source access satellite; b = sat index
_EV_SERVICE = 2  # service completion; a = sat index, b = packet
_EV_LINK = 3  # packet reaches the next satellite; b = sat index
_EV_DELIVERY = 4  # downlink completes at the destination user
_EV_SLOT = 5  # routing slot boundary; a = slot index
_EV_SWEEP = 6  # periodic arrival-rate re-evaluation of every satellite
_EV_TICK = 7  # stats bucket boundary


class _SatNode:
    __slots__ = ("scheduler", "cong", "wait_queue", "in_service", "chan_free")

    def __init__(self, scheduler: PqwrrScheduler, cong: NodeCongestionState):
        self.scheduler = scheduler
        self.cong = cong
        self.wait_queue: deque = deque()
        self.in_service: Optional[Packet] = None
        self.chan_free: dict[int, float] = {}


class Simulation:
    """One run of one scenario. Build, call `run()`, read the report."""

    def __init__(self, cfg: ScenarioConfig, arrivals=None):
        self.cfg = cfg
        params = cfg.constellation
        self.params = params
        self.n = params.num_sats
        self.sids = [params.sid_of(i) for i in range(self.n)]
        grid = cfg.load_grid()
        self.generator = ArrivalGenerator(
            flows=list(cfg.traffic.flows),
            grid=grid,
            background_rate=cfg.traffic.background_rate,
            ratios=ContinentRatioTable(),
            class_mix=cfg.traffic.class_mix,
            seed=cfg.run.seed,
        )
        self._scripted = arrivals
        self.resolver = AccessResolver(params, quantum_s=cfg.run.access_refresh_s)
        for term in self.generator.terminals:
            self.resolver.register(term.position)
        self.nodes = [
            _SatNode(
                PqwrrScheduler(
                    capacity=cfg.scheduler.buffer_capacity,
                    weights=cfg.scheduler.weights,
                    scope=cfg.scheduler.buffer_scope,
                    owner=self.sids[i],
                ),
                NodeCongestionState(self.sids[i]),
            )
            for i in range(self.n)
        ]
        self.stats = StatsCollector(
            horizon_s=cfg.run.duration_s,
            bucket_s=cfg.run.stats_interval_s,
            seed=cfg.run.seed,
            strategy=cfg.routing.strategy,
        )
        self.composite = cfg.routing.strategy == "composite"
        self.busy_flags = [False] * self.n
        self.busy_count = 0
        self.snapshot = None
        self.primary = None
        self.backup = None
        self._heap: list = []
        self._seq = 0
        self._in_flight = 0
        self._service_period = 1.0 / cfg.scheduler.service_rate
        self._chan_period = 1.0 / cfg.scheduler.channel_rate
        self._count_uplink = cfg.traffic.count_uplink_in_rate
        self.trace: Optional[list] = [] if cfg.run.trace else None
        self.route_dump: Optional[list] = [] if cfg.routing.dump_routes else None
        self._ground_xyz = self._terminal_vectors()
        self._setup_orbit_constants()

    # -- geometry fast paths -------------------------------------------------

    def _terminal_vectors(self) -> list[tuple[float, float, float]]:
        out = []
        for term in self.generator.terminals:
            lat = math.radians(term.position.lat_deg)
            lon = math.radians(term.position.lon_deg)
            r = EARTH_RADIUS_KM + term.position.alt_km
            cl = math.cos(lat)
            out.append((r * cl * math.cos(lon), r * cl * math.sin(lon), r * math.sin(lat)))
        return out

    def _setup_orbit_constants(self) -> None:
        p = self.params
        self._orb_a = p.orbit_radius_km
        self._orb_n = p.mean_motion_rad_s
        self._orb_ci = math.cos(math.radians(p.inclination_deg))
        self._orb_si = math.sin(math.radians(p.inclination_deg))
        # per-satellite RAAN trig is constant; only the phase advances
        self._raan_cos = [math.cos(p.raan_rad(i // p.sats_per_plane)) for i in range(self.n)]
        self._raan_sin = [math.sin(p.raan_rad(i // p.sats_per_plane)) for i in range(self.n)]
        self._phase0 = [p.initial_phase_rad(self.sids[i]) for i in range(self.n)]

    def _sat_xyz(self, idx: int, t: float) -> tuple[float, float, float]:
        u = self._phase0[idx] + self._orb_n * t
        cu, su = math.cos(u), math.sin(u)
        co, so = self._raan_cos[idx], self._raan_sin[idx]
        a, ci = self._orb_a, self._orb_ci
        return (
            a * (co * cu - so * su * ci),
            a * (so * cu + co * su * ci),
            a * su * self._orb_si,
        )

    def _link_delay(self, i: int, j: int, t: float) -> float:
        cos, sin = math.cos, math.sin
        nt = self._orb_n * t
        ci, si, a = self._orb_ci, self._orb_si, self._orb_a
        u = self._phase0[i] + nt
        cu, su = cos(u), sin(u)
        co, so = self._raan_cos[i], self._raan_sin[i]
        xi = co * cu - so * su * ci
        yi = so * cu + co * su * ci
        zi = su * si
        u = self._phase0[j] + nt
        cu, su = cos(u), sin(u)
        co, so = self._raan_cos[j], self._raan_sin[j]
        dx = xi - (co * cu - so * su * ci)
        dy = yi - (so * cu + co * su * ci)
        dz = zi - su * si
        return a * math.sqrt(dx * dx + dy * dy + dz * dz) / SPEED_OF_LIGHT_KM_S

    def _slant_delay(self, terminal: int, sat: int, t: float) -> float:
        gx, gy, gz = self._ground_xyz[terminal]
        theta = EARTH_ROTATION_RAD_S * t
        c, s = math.cos(theta), math.sin(theta)
        ux, uy = gx * c - gy * s, gx * s + gy * c
        sx, sy, sz = self._sat_xyz(sat, t)
        d = math.sqrt((sx - ux) ** 2 + (sy - uy) ** 2 + (sz - gz) ** 2)
        return d / SPEED_OF_LIGHT_KM_S

    # -- event plumbing ------------------------------------------------------

    def _schedule(self, t: float, kind: int, a=None, b=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, a, b))

    def _trace(self, t: float, event: str, pkt: Packet, sat: int) -> None:
        name = str(self.sids[sat]) if sat >= 0 else "-"
        self.trace.append((t, event, pkt.id, pkt.tos.name, name, pkt.hop))

    # -- routing state -------------------------------------------------------

    def _busy_sids(self) -> set:
        return {self.sids[i] for i, b in enumerate(self.busy_flags) if b}

    def _rebuild_for_slot(self, t: float, slot: int) -> None:
        self.snapshot = build_topology_snapshot(self.params, t, slot)
        self.primary = compute_shortest_path_table(self.snapshot)
        if self.composite:
            self.backup = compute_backup_table(self.snapshot, self._busy_sids())
        if self.route_dump is not None:
            for src, dst, nxt, cost in self.primary.entries():
                self.route_dump.append((slot, str(src), str(dst), str(nxt) if nxt else "", cost))

    def _rebuild_backup(self, t: float) -> None:
        if self.composite:
            self.backup = compute_backup_table(self.snapshot, self._busy_sids())
        self._drain_wait_queues(t)

    def _apply_notification(self, notif) -> None:
        idx = self.params.index_of(notif.satellite)
        now_busy = notif.label is CongestionLabel.BUSY
        if self.busy_flags[idx] != now_busy:
            self.busy_flags[idx] = now_busy
            self.busy_count += 1 if now_busy else -1
        self.stats.note_state_change(notif)
        if now_busy:
            self.stats.note_busy(notif.time)

    def _drain_wait_queues(self, t: float) -> None:
        for i in range(self.n):
            node = self.nodes[i]
            if node.wait_queue:
                pending = list(node.wait_queue)
                node.wait_queue.clear()
                for pkt in pending:
                    self._route(t, pkt, i)

    # -- packet pipeline -----------------------------------------------------

    def _on_sat_arrival(self, t: float, pkt: Packet, sat: int, uplink: bool) -> None:
        node = self.nodes[sat]
        if not uplink or self._count_uplink:
            notif = node.cong.record_arrival(t, self.cfg.congestion)
            if notif is not None:
                self._apply_notification(notif)
                self._rebuild_backup(t)
        drop = node.scheduler.enqueue(pkt, t)
        if drop is not None:
            self.stats.record_drop(drop, sat)
            if self.trace is not None:
                self._trace(t, "drop", pkt, sat)
        elif node.in_service is None:
            self._start_service(t, node, sat)

    def _start_service(self, t: float, node: _SatNode, sat: int) -> None:
        pkt = node.scheduler.dequeue()
        node.in_service = pkt
        self._schedule(t + self._service_period, _EV_SERVICE, sat, pkt)

    def _route(self, t: float, pkt: Packet, sat: int) -> None:
        """Forwarding decision for a packet that finished service (or left the
        routing wait queue) at satellite `sat`.

        A packet that has been detoured once stays on the backup table until
        delivery: alternating between the two tables hop by hop can bounce a
        packet between neighbouring satellites indefinitely, while a single
        table is loop-free. When the busy episode ends the tables coincide, so
        a detoured packet naturally rejoins shortest paths.
        """
        dst = self.resolver.access_index(pkt.dst_user, t)
        if dst < 0:
            self._wait(t, pkt, sat)
            return
        pkt.dst_sat = self.sids[dst]
        if dst == sat:
            delay = self._slant_delay(pkt.dst_user, sat, t)
            self._in_flight += 1
            self._schedule(t + delay, _EV_DELIVERY, pkt)
            if self.trace is not None:
                self._trace(t, "downlink", pkt, sat)
            return
        if pkt.detoured:
            nxt = self.backup.next_idx[sat][dst]
            if nxt < 0 or self.busy_flags[nxt]:
                self._wait(t, pkt, sat)
                return
            self.stats.backup_forwards += 1
            self._transmit(t, pkt, sat, nxt)
            return
        nxt = self.primary.next_idx[sat][dst]
        if nxt >= 0 and (not self.busy_flags[nxt] or not self.composite):
            self._transmit(t, pkt, sat, nxt)
            return
        nxt, via = decide_next_index(
            pkt.tos, sat, dst, self.primary, self.backup if self.composite else None,
            self.busy_flags,
        )
        if nxt < 0:
            self._wait(t, pkt, sat)
            return
        if via is not None and via.value == "backup":
            self.stats.backup_forwards += 1
            pkt.detoured = True
        self._transmit(t, pkt, sat, nxt)

    def _transmit(self, t: float, pkt: Packet, sat: int, nxt: int) -> None:
        node = self.nodes[sat]
        free = node.chan_free.get(nxt, 0.0)
        depart = t if t >= free else free
        node.chan_free[nxt] = depart + self._chan_period
        pkt.next = self.sids[nxt]
        prop = self._link_delay(sat, nxt, depart)
        self._in_flight += 1
        self._schedule(depart + prop, _EV_LINK, pkt, nxt)
        if self.trace is not None:
            self._trace(depart, "forward", pkt, sat)

    def _wait(self, t: float, pkt: Packet, sat: int) -> None:
        node = self.nodes[sat]
        if len(node.wait_queue) >= self.cfg.routing.wait_queue_capacity:
            rec = DropRecord(t, self.sids[sat], pkt.tos, DropReason.ROUTE_WAIT_OVERFLOW)
            self.stats.record_drop(rec, sat)
            if self.trace is not None:
                self._trace(t, "drop", pkt, sat)
        else:
            node.wait_queue.append(pkt)
            self.stats.wait_enqueues += 1
            if self.trace is not None:
                self._trace(t, "wait", pkt, sat)

    # -- main loop -----------------------------------------------------------

    def run(self) -> SimulationReport:
        cfg = self.cfg
        end = cfg.run.duration_s
        self._rebuild_for_slot(0.0, 0)

        slot = cfg.routing.slot_length_s
        for k in range(1, int(end / slot) + 1):
            self._schedule(k * slot, _EV_SLOT, k)
        tick = cfg.run.stats_interval_s
        for k in range(1, int(end / tick) + 1):
            self._schedule(k * tick, _EV_TICK, k)
        sweep = cfg.run.state_check_interval_s
        for k in range(1, int(end / sweep) + 1):
            self._schedule(k * sweep, _EV_SWEEP, k)

        if self._scripted is not None:
            stream = iter(self._scripted)
        else:
            stream = self.generator.stream(end)
        first = next(stream, None)
        if first is not None:
            self._schedule(first[0], _EV_SOURCE, first[1])

        heap = self._heap
        stats = self.stats
        nodes = self.nodes
        while heap and heap[0][0] <= end:
            t, _, kind, a, b = heapq.heappop(heap)

            if kind == _EV_SERVICE:
                node = nodes[a]
                node.in_service = None
                if len(node.scheduler):
                    self._start_service(t, node, a)
                if self.trace is not None:
                    self._trace(t, "service", b, a)
                self._route(t, b, a)
            elif kind == _EV_LINK:
                self._in_flight -= 1
                a.hop += 1
                if self.trace is not None:
                    self._trace(t, "link_arrival", a, b)
                self._on_sat_arrival(t, a, b, uplink=False)
            elif kind == _EV_SOURCE:
                pkt = a
                stats.record_generated(pkt)
                src = self.resolver.access_index(pkt.src_user, t)
                if src < 0:
                    rec = DropRecord(t, None, pkt.tos, DropReason.ACCESS_BLOCKED)
                    stats.record_drop(rec, -1)
                else:
                    delay = self._slant_delay(pkt.src_user, src, t)
                    self._in_flight += 1
                    self._schedule(t + delay, _EV_UPLINK, pkt, src)
                    if self.trace is not None:
                        self._trace(t, "generated", pkt, src)
                nxt = next(stream, None)
                if nxt is not None:
                    self._schedule(nxt[0], _EV_SOURCE, nxt[1])
            elif kind == _EV_UPLINK:
                self._in_flight -= 1
                self._on_sat_arrival(t, a, b, uplink=True)
            elif kind == _EV_DELIVERY:
                self._in_flight -= 1
                a.delivered_at = t
                stats.record_delivery(a, t)
                if self.trace is not None:
                    self._trace(t, "deliver", a, -1)
            elif kind == _EV_SWEEP:
                notifs = []
                ccfg = cfg.congestion
                for node in nodes:
                    n = node.cong.evaluate(t, ccfg)
                    if n is not None:
                        notifs.append(n)
                for n in notifs:
                    self._apply_notification(n)
                if notifs:
                    self._rebuild_backup(t)
                if self.busy_count:
                    stats.note_busy(t)
            elif kind == _EV_SLOT:
                self._rebuild_for_slot(t, a)
                self._drain_wait_queues(t)
            elif kind == _EV_TICK:
                if self.busy_count:
                    stats.note_busy(t)

        residual = self._in_flight
        for node in nodes:
            residual += len(node.scheduler) + len(node.wait_queue)
            if node.in_service is not None:
                residual += 1
        report = stats.finalize(residual)
        report.route_dump = self.route_dump
        report.trace_rows = self.trace
        return report


def run(cfg: ScenarioConfig, arrivals=None) -> SimulationReport:
    return Simulation(cfg, arrivals=arrivals).run()


def conservation_audit(report: SimulationReport) -> bool:
    """Exact accounting: generated = delivered + dropped + residual."""
    return report.generated_total() == (
        report.delivered_total() + report.dropped_total() + report.residual
    )
