import random
from types import SimpleNamespace

import numpy as np
import pytest

from leoqsim.constellation import (
    ConstellationParams,
    GeoPosition,
    SatelliteId,
    access_satellite,
    build_topology_snapshot,
)
from leoqsim.routing import (
    Action,
    Via,
    compute_backup_table,
    compute_shortest_path_table,
    decide_forward,
)
from leoqsim.scheduling import TrafficClass

PARAMS = ConstellationParams()

INF = 1 << 50


def fw_oracle(snapshot, busy=frozenset()):
    """Brute-force all-pairs costs in integer picoseconds via Floyd-Warshall.

    Busy nodes are deleted from the graph; a busy source's cost is the best
    (edge + reduced-graph cost) over its non-busy neighbors.
    """
    params = snapshot.params
    n = params.num_sats
    busy_idx = {params.index_of(s) for s in busy}
    dist = np.full((n, n), INF, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    for a, b, e in snapshot.edges():
        i, j = params.index_of(a), params.index_of(b)
        if i in busy_idx or j in busy_idx:
            continue
        w = round(e.delay_s * 1e12)
        dist[i, j] = min(dist[i, j], w)
        dist[j, i] = dist[i, j]
    for i in busy_idx:
        dist[i, :] = INF
        dist[:, i] = INF
    for k in range(n):
        if k in busy_idx:
            continue
        dist = np.minimum(dist, dist[:, k : k + 1] + dist[k : k + 1, :])
    # busy sources re-attach through their own edges
    out = dist.copy()
    for i in busy_idx:
        for sid_j, e in _incident(snapshot, params.sid_of(i)):
            j = params.index_of(sid_j)
            if j in busy_idx:
                continue
            w = round(e.delay_s * 1e12)
            out[i, :] = np.minimum(out[i, :], w + dist[j, :])
        out[i, i] = INF  # deleted as a destination, even from itself
    for j in busy_idx:
        out[:, j] = INF
    return out


def _incident(snapshot, sid):
    for nb in snapshot.neighbors(sid):
        yield nb, snapshot.adjacency[(sid, nb)]


def iterated_path_cost_ps(table, snapshot, src, dst):
    """Cost of the table's realized path, summed edge by edge; None if no route."""
    if src == dst:
        return 0
    total = 0
    here = src
    for _ in range(snapshot.params.num_sats):
        nxt = table.next_hop(here, dst)
        if nxt is None:
            return None
        total += round(snapshot.adjacency[(here, nxt)].delay_s * 1e12)
        if nxt == dst:
            return total
        here = nxt
    raise AssertionError("routing loop")


def random_busy(rng, size):
    return {SatelliteId(rng.randrange(6), rng.randrange(11)) for _ in range(size)}


def test_one_hop_next_is_destination():
    snap = build_topology_snapshot(PARAMS, 0.0)
    table = compute_shortest_path_table(snap)
    a = SatelliteId(0, 0)
    for b in snap.neighbors(a):
        assert table.next_hop(a, b) == b


def test_primary_matches_floyd_warshall_exactly():
    rng = random.Random(2024)
    for _ in range(20):
        t = rng.uniform(0, 2 * PARAMS.period_s)
        snap = build_topology_snapshot(PARAMS, t)
        table = compute_shortest_path_table(snap)
        oracle = fw_oracle(snap)
        for i in range(PARAMS.num_sats):
            for j in range(PARAMS.num_sats):
                if i == j:
                    continue
                src, dst = PARAMS.sid_of(i), PARAMS.sid_of(j)
                got = iterated_path_cost_ps(table, snap, src, dst)
                if oracle[i, j] >= INF:
                    assert got is None
                else:
                    assert got == oracle[i, j]
                    assert table.cost_ps[i][j] == oracle[i, j]


def test_backup_matches_oracle_and_excludes_busy():
    rng = random.Random(77)
    for _ in range(20):
        t = rng.uniform(0, 2 * PARAMS.period_s)
        snap = build_topology_snapshot(PARAMS, t)
        busy = random_busy(rng, rng.randint(1, 8))
        table = compute_backup_table(snap, busy)
        oracle = fw_oracle(snap, busy)
        for i in range(PARAMS.num_sats):
            for j in range(PARAMS.num_sats):
                if i == j:
                    continue
                src, dst = PARAMS.sid_of(i), PARAMS.sid_of(j)
                nxt = table.next_hop(src, dst)
                assert nxt not in busy
                got = iterated_path_cost_ps(table, snap, src, dst)
                if oracle[i, j] >= INF:
                    assert got is None
                else:
                    assert got == oracle[i, j]


def test_backup_with_empty_busy_equals_primary():
    snap = build_topology_snapshot(PARAMS, 500.0)
    primary = compute_shortest_path_table(snap)
    backup = compute_backup_table(snap, set())
    assert primary.next_idx == backup.next_idx
    assert primary.cost_ps == backup.cost_ps


def test_all_neighbors_busy_isolates_source():
    snap = build_topology_snapshot(PARAMS, 0.0)
    x = SatelliteId(2, 4)
    busy = set(snap.neighbors(x))
    table = compute_backup_table(snap, busy)
    for j in range(PARAMS.num_sats):
        dst = PARAMS.sid_of(j)
        if dst != x:
            assert table.next_hop(x, dst) is None


def test_busy_destination_unreachable():
    snap = build_topology_snapshot(PARAMS, 0.0)
    busy = {SatelliteId(3, 3)}
    table = compute_backup_table(snap, busy)
    for i in range(PARAMS.num_sats):
        src = PARAMS.sid_of(i)
        if src != SatelliteId(3, 3):
            assert table.next_hop(src, SatelliteId(3, 3)) is None


def test_loop_freedom_both_tables():
    rng = random.Random(5)
    for _ in range(10):
        t = rng.uniform(0, PARAMS.period_s)
        snap = build_topology_snapshot(PARAMS, t)
        busy = random_busy(rng, rng.randint(0, 6))
        for table in (compute_shortest_path_table(snap), compute_backup_table(snap, busy)):
            for i in range(PARAMS.num_sats):
                for j in range(PARAMS.num_sats):
                    if i != j:
                        p = table.path(PARAMS.sid_of(i), PARAMS.sid_of(j))  # raises on loop
                        if p is not None:
                            assert len(set(p)) == len(p)
                            assert len(p) - 1 <= PARAMS.num_sats - 1


def test_monotone_degradation():
    # Deleting nodes never decreases any still-reachable pair's cost.
    rng = random.Random(13)
    for _ in range(8):
        t = rng.uniform(0, PARAMS.period_s)
        snap = build_topology_snapshot(PARAMS, t)
        base = compute_shortest_path_table(snap)
        busy = random_busy(rng, rng.randint(1, 6))
        reduced = compute_backup_table(snap, busy)
        for i in range(PARAMS.num_sats):
            for j in range(PARAMS.num_sats):
                if i == j:
                    continue
                c0 = base.cost_ps[i][j]
                c1 = reduced.cost_ps[i][j]
                if c1 >= 0:
                    assert c1 >= c0


def test_paper_region_hop_counts_across_slots():
    src_u = GeoPosition(-56.0, 26.0)
    dst_u = GeoPosition(65.2, -58.0)
    for k in range(30):
        t = k * 60.0
        snap = build_topology_snapshot(PARAMS, t, k)
        table = compute_shortest_path_table(snap)
        s = access_satellite(src_u, PARAMS, t)
        d = access_satellite(dst_u, PARAMS, t)
        assert s is not None and d is not None
        path = table.path(s, d)
        assert path is not None
        assert 5 <= len(path) - 1 <= 9


class TestDecideForward:
    @pytest.fixture()
    def setup(self):
        snap = build_topology_snapshot(PARAMS, 0.0)
        primary = compute_shortest_path_table(snap)
        src = SatelliteId(0, 0)
        dst = SatelliteId(3, 5)
        hop = primary.next_hop(src, dst)
        return snap, primary, src, dst, hop

    @staticmethod
    def states(busy=frozenset()):
        return {
            sid: SimpleNamespace(is_busy=(sid in busy)) for sid in PARAMS.satellite_ids()
        }

    @staticmethod
    def packet(tos, dst):
        return SimpleNamespace(tos=tos, dst_sat=dst)

    def test_deliver_at_destination(self, setup):
        snap, primary, src, dst, hop = setup
        backup = compute_backup_table(snap, set())
        d = decide_forward(self.packet(TrafficClass.A, dst), dst, primary, backup, self.states())
        assert d.action is Action.DELIVER

    def test_idle_hop_forwards_primary(self, setup):
        snap, primary, src, dst, hop = setup
        backup = compute_backup_table(snap, set())
        d = decide_forward(self.packet(TrafficClass.B1, dst), src, primary, backup, self.states())
        assert (d.action, d.next, d.via) == (Action.FORWARD, hop, Via.PRIMARY)

    def test_class_a_ignores_busy_hop(self, setup):
        snap, primary, src, dst, hop = setup
        busy = {hop}
        backup = compute_backup_table(snap, busy)
        d = decide_forward(
            self.packet(TrafficClass.A, dst), src, primary, backup, self.states(busy)
        )
        assert (d.action, d.next, d.via) == (Action.FORWARD, hop, Via.PRIMARY)

    def test_class_b_detours_via_backup(self, setup):
        snap, primary, src, dst, hop = setup
        busy = {hop}
        backup = compute_backup_table(snap, busy)
        alt = backup.next_hop(src, dst)
        assert alt is not None and alt != hop
        d = decide_forward(
            self.packet(TrafficClass.B1, dst), src, primary, backup, self.states(busy)
        )
        assert (d.action, d.next, d.via) == (Action.FORWARD, alt, Via.BACKUP)

    def test_class_b_waits_when_no_backup(self, setup):
        snap, primary, src, dst, hop = setup
        busy = set(snap.neighbors(src))  # source fully surrounded
        backup = compute_backup_table(snap, busy)
        d = decide_forward(
            self.packet(TrafficClass.B0, dst), src, primary, backup, self.states(busy)
        )
        assert d.action is Action.WAIT

    def test_class_b_waits_when_backup_hop_busy(self, setup):
        snap, primary, src, dst, hop = setup
        # Stale-table situation: backup built for {hop} but its suggested hop
        # has since gone busy as well; the state check at forwarding time wins.
        backup = compute_backup_table(snap, {hop})
        alt = backup.next_hop(src, dst)
        d = decide_forward(
            self.packet(TrafficClass.B2, dst), src, primary, backup, self.states({hop, alt})
        )
        assert d.action is Action.WAIT

    def test_forwarded_hop_is_adjacent(self, setup):
        snap, primary, src, dst, hop = setup
        backup = compute_backup_table(snap, {hop})
        for tos in TrafficClass:
            d = decide_forward(
                self.packet(tos, dst), src, primary, backup, self.states({hop})
            )
            if d.action is Action.FORWARD:
                assert snap.has_edge(src, d.next)
