"""Walker-star constellation geometry and the time-varying link topology.

Satellites fly analytic circular orbits around a spherical Earth. Inter-plane
link availability is gated by sub-satellite latitude, and no inter-plane links
cross the counter-rotating seam between the first and last plane. All
inter-satellite geometry lives in an Earth-centered inertial frame; Earth
rotation enters only when ground positions are converted for access and
elevation computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Optional

import numpy as np

EARTH_RADIUS_KM = 6371.0
MU_EARTH_KM3_S2 = 398600.44
SPEED_OF_LIGHT_KM_S = 299792.458
SIDEREAL_DAY_S = 86164.0
EARTH_ROTATION_RAD_S = 2.0 * math.pi / SIDEREAL_DAY_S

# Link weights are quantized to integer picoseconds so route computations and
# their oracles use exact arithmetic regardless of summation order.
PICOSECONDS_PER_SECOND = 10**12


class SatelliteId(NamedTuple):
    plane: int
    slot: int

    def __str__(self) -> str:
        return f"S-{self.plane}-{self.slot}"


class GeoPosition(NamedTuple):
    lat_deg: float
    lon_deg: float
    alt_km: float = 0.0


class LinkKind(Enum):
    ISL = "isl"  # intra-plane, permanent
    IOL = "iol"  # inter-plane, latitude-gated, absent at the seam


class LinkEdge(NamedTuple):
    delay_s: float
    delay_ps: int
    kind: LinkKind


@dataclass(frozen=True)
class ConstellationParams:
    """Shape and gating parameters of the constellation."""

    planes: int = 6
    sats_per_plane: int = 11
    altitude_km: float = 780.0
    inclination_deg: float = 86.4
    lat_threshold_deg: float = 60.0
    min_elevation_deg: float = 8.2
    raan_spread_deg: float = 180.0
    phase_offset_deg: float = 360.0 / (2 * 11)

    def __post_init__(self) -> None:
        if self.planes < 1 or self.sats_per_plane < 3:
            raise ValueError("constellation needs >= 1 plane and >= 3 satellites per plane")
        if self.altitude_km <= 0:
            raise ValueError("altitude_km must be > 0")
        if not 0.0 < self.inclination_deg <= 90.0:
            raise ValueError("inclination_deg must be in (0, 90]")
        if not 0.0 <= self.lat_threshold_deg <= 90.0:
            raise ValueError("lat_threshold_deg must be in [0, 90]")

    @property
    def num_sats(self) -> int:
        return self.planes * self.sats_per_plane

    @property
    def orbit_radius_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(MU_EARTH_KM3_S2 / self.orbit_radius_km**3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s

    def index_of(self, sid: SatelliteId) -> int:
        return sid.plane * self.sats_per_plane + sid.slot

    def sid_of(self, index: int) -> SatelliteId:
        return SatelliteId(index // self.sats_per_plane, index % self.sats_per_plane)

    def satellite_ids(self) -> Iterator[SatelliteId]:
        for p in range(self.planes):
            for s in range(self.sats_per_plane):
                yield SatelliteId(p, s)

    # Per-satellite orbital elements: ascending node and initial phase.
    def raan_rad(self, plane: int) -> float:
        return math.radians(self.raan_spread_deg) * plane / self.planes

    def initial_phase_rad(self, sid: SatelliteId) -> float:
        return (
            2.0 * math.pi * sid.slot / self.sats_per_plane
            + math.radians(self.phase_offset_deg) * sid.plane
        )


def satellite_position(
    sid: SatelliteId, params: ConstellationParams, t: float
) -> tuple[np.ndarray, GeoPosition]:
    """Inertial position (km) and sub-satellite point of one satellite at time t."""
    a = params.orbit_radius_km
    inc = math.radians(params.inclination_deg)
    omega = params.raan_rad(sid.plane)
    u = params.initial_phase_rad(sid) + params.mean_motion_rad_s * t
    cu, su = math.cos(u), math.sin(u)
    co, so = math.cos(omega), math.sin(omega)
    ci, si = math.cos(inc), math.sin(inc)
    xyz = np.array(
        [
            a * (co * cu - so * su * ci),
            a * (so * cu + co * su * ci),
            a * su * si,
        ]
    )
    lat = math.degrees(math.asin(xyz[2] / a))
    lon_inertial = math.atan2(xyz[1], xyz[0])
    lon = math.degrees(lon_inertial - EARTH_ROTATION_RAD_S * t)
    lon = (lon + 180.0) % 360.0 - 180.0
    return xyz, GeoPosition(lat, lon, params.altitude_km)


def satellite_positions(params: ConstellationParams, t: float) -> np.ndarray:
    """Inertial positions of all satellites at time t, shape (N, 3), indexed by plane*S+slot."""
    n = params.num_sats
    planes = np.arange(n) // params.sats_per_plane
    slots = np.arange(n) % params.sats_per_plane
    omega = np.radians(params.raan_spread_deg) * planes / params.planes
    u = (
        2.0 * np.pi * slots / params.sats_per_plane
        + np.radians(params.phase_offset_deg) * planes
        + params.mean_motion_rad_s * t
    )
    inc = math.radians(params.inclination_deg)
    a = params.orbit_radius_km
    cu, su = np.cos(u), np.sin(u)
    co, so = np.cos(omega), np.sin(omega)
    ci, si = math.cos(inc), math.sin(inc)
    out = np.empty((n, 3))
    out[:, 0] = a * (co * cu - so * su * ci)
    out[:, 1] = a * (so * cu + co * su * ci)
    out[:, 2] = a * su * si
    return out


def subsatellite_latitudes_deg(params: ConstellationParams, t: float) -> np.ndarray:
    pos = satellite_positions(params, t)
    return np.degrees(np.arcsin(pos[:, 2] / params.orbit_radius_km))


def ground_position_eci(user: GeoPosition, t: float) -> np.ndarray:
    """Inertial position of an Earth-fixed point at time t (Earth rotates beneath orbits)."""
    lat = math.radians(user.lat_deg)
    lon = math.radians(user.lon_deg) + EARTH_ROTATION_RAD_S * t
    r = EARTH_RADIUS_KM + user.alt_km
    cl = math.cos(lat)
    return np.array([r * cl * math.cos(lon), r * cl * math.sin(lon), r * math.sin(lat)])


def elevation_deg(user: GeoPosition, sat_xyz: np.ndarray, t: float) -> float:
    """Elevation angle of a satellite above the user's local horizon."""
    u = ground_position_eci(user, t)
    d = sat_xyz - u
    dn = float(np.linalg.norm(d))
    un = float(np.linalg.norm(u))
    s = float(np.dot(d, u)) / (dn * un)
    return math.degrees(math.asin(max(-1.0, min(1.0, s))))


@dataclass
class TopologySnapshot:
    """Static link graph for one routing time slot.

    `adjacency` holds both orderings of every undirected edge. `neighbor_table`
    is the same graph in index form (sorted by neighbor index) for the route
    computations.
    """

    slot_index: int
    params: ConstellationParams
    adjacency: dict[tuple[SatelliteId, SatelliteId], LinkEdge]
    neighbor_table: list[list[tuple[int, int, float]]] = field(repr=False)

    def has_edge(self, a: SatelliteId, b: SatelliteId) -> bool:
        return (a, b) in self.adjacency

    def delay_s(self, a: SatelliteId, b: SatelliteId) -> float:
        return self.adjacency[(a, b)].delay_s

    def neighbors(self, a: SatelliteId) -> list[SatelliteId]:
        idx = self.params.index_of(a)
        return [self.params.sid_of(j) for j, _, _ in self.neighbor_table[idx]]

    def edges(self) -> Iterator[tuple[SatelliteId, SatelliteId, LinkEdge]]:
        """Each undirected edge once, with a < b."""
        for (a, b), e in self.adjacency.items():
            if a < b:
                yield a, b, e


def build_topology_snapshot(
    params: ConstellationParams, t: float, slot_index: int | None = None
) -> TopologySnapshot:
    """Derive the link graph at time t.

    Intra-plane links are permanent ring edges. Inter-plane links join
    same-slot satellites of adjacent planes, are dropped when either endpoint
    is above the latitude threshold, and never cross the seam.
    """
    pos = satellite_positions(params, t)
    lats = np.degrees(np.arcsin(pos[:, 2] / params.orbit_radius_km))
    S = params.sats_per_plane
    adjacency: dict[tuple[SatelliteId, SatelliteId], LinkEdge] = {}
    n = params.num_sats
    neighbor_table: list[list[tuple[int, int, float]]] = [[] for _ in range(n)]

    def add_edge(i: int, j: int, kind: LinkKind) -> None:
        d = float(np.linalg.norm(pos[i] - pos[j]))
        delay = d / SPEED_OF_LIGHT_KM_S
        edge = LinkEdge(delay, round(delay * PICOSECONDS_PER_SECOND), kind)
        a, b = params.sid_of(i), params.sid_of(j)
        adjacency[(a, b)] = edge
        adjacency[(b, a)] = edge
        neighbor_table[i].append((j, edge.delay_ps, edge.delay_s))
        neighbor_table[j].append((i, edge.delay_ps, edge.delay_s))

    for p in range(params.planes):
        for s in range(S):
            add_edge(p * S + s, p * S + (s + 1) % S, LinkKind.ISL)
    thr = params.lat_threshold_deg
    for p in range(params.planes - 1):  # seam pair (last, first) excluded
        for s in range(S):
            i, j = p * S + s, (p + 1) * S + s
            if abs(lats[i]) <= thr and abs(lats[j]) <= thr:
                add_edge(i, j, LinkKind.IOL)

    for row in neighbor_table:
        row.sort()
    if slot_index is None:
        slot_index = 0
    return TopologySnapshot(slot_index, params, adjacency, neighbor_table)


def access_satellite(
    user: GeoPosition, params: ConstellationParams, t: float
) -> Optional[SatelliteId]:
    """Visible satellite with maximum elevation, or None if none clears the mask.

    Ties break toward the smallest (plane, slot), which argmax's first-match
    rule delivers because satellites are indexed in that order.
    """
    pos = satellite_positions(params, t)
    u = ground_position_eci(user, t)
    d = pos - u
    dn = np.linalg.norm(d, axis=1)
    un = float(np.linalg.norm(u))
    sin_e = (d @ u) / (dn * un)
    best = int(np.argmax(sin_e))
    if sin_e[best] < math.sin(math.radians(params.min_elevation_deg)):
        return None
    return params.sid_of(best)


def time_slot_index(t: float, slot_length: float) -> int:
    if slot_length <= 0:
        raise ValueError("slot_length must be > 0")
    return int(math.floor(t / slot_length))


def pair_delay_s(params: ConstellationParams, a: SatelliteId, b: SatelliteId, t: float) -> float:
    """Instantaneous propagation delay between two satellites at time t."""
    pa, _ = satellite_position(a, params, t)
    pb, _ = satellite_position(b, params, t)
    return float(np.linalg.norm(pa - pb)) / SPEED_OF_LIGHT_KM_S


def ground_slant_delay_s(
    user: GeoPosition, sid: SatelliteId, params: ConstellationParams, t: float
) -> float:
    """Instantaneous uplink/downlink propagation delay between a ground point and a satellite."""
    p, _ = satellite_position(sid, params, t)
    u = ground_position_eci(user, t)
    return float(np.linalg.norm(p - u)) / SPEED_OF_LIGHT_KM_S


class AccessResolver:
    """Cached access-satellite lookups on a fixed time grid.

    Terminals sit at fixed ground positions, so per time quantum one
    vectorized elevation pass covers every registered terminal. The engine
    quantizes lookup times to `quantum_s`; geometry helpers stay exact.
    """

    def __init__(self, params: ConstellationParams, quantum_s: float = 1.0):
        if quantum_s <= 0:
            raise ValueError("quantum_s must be > 0")
        self.params = params
        self.quantum_s = quantum_s
        self._positions: list[GeoPosition] = []
        self._unit_ecef: np.ndarray | None = None  # (T, 3) unit vectors, Earth-fixed
        self._cache: dict[int, list[int]] = {}  # quantum -> best sat index per terminal (-1 none)
        self._min_sin_e = math.sin(math.radians(params.min_elevation_deg))

    def register(self, pos: GeoPosition) -> int:
        """Add a terminal; returns its handle. Invalidate nothing: call before lookups."""
        self._positions.append(pos)
        self._unit_ecef = None
        self._cache.clear()
        return len(self._positions) - 1

    def _units(self) -> np.ndarray:
        if self._unit_ecef is None:
            lats = np.radians([p.lat_deg for p in self._positions])
            lons = np.radians([p.lon_deg for p in self._positions])
            cl = np.cos(lats)
            self._unit_ecef = np.stack(
                [cl * np.cos(lons), cl * np.sin(lons), np.sin(lats)], axis=1
            )
        return self._unit_ecef

    def access_index(self, terminal: int, t: float) -> int:
        """Best satellite index for a terminal at the quantized time, or -1."""
        q = int(t / self.quantum_s)
        row = self._cache.get(q)
        if row is None:
            row = self._solve(q)
            self._cache[q] = row
        return row[terminal]

    def access(self, terminal: int, t: float) -> Optional[SatelliteId]:
        idx = self.access_index(terminal, t)
        return None if idx < 0 else self.params.sid_of(idx)

    def _solve(self, q: int) -> list[int]:
        t = q * self.quantum_s
        sat = satellite_positions(self.params, t)  # (N, 3)
        theta = EARTH_ROTATION_RAD_S * t
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        units = self._units() @ rot.T  # terminals in the inertial frame
        ground = units * EARTH_RADIUS_KM  # (T, 3)
        d = sat[None, :, :] - ground[:, None, :]  # (T, N, 3)
        dn = np.linalg.norm(d, axis=2)
        sin_e = np.einsum("tns,ts->tn", d, units) / dn
        best = np.argmax(sin_e, axis=1)
        ok = sin_e[np.arange(len(best)), best] >= self._min_sin_e
        return [int(b) if good else -1 for b, good in zip(best, ok)]
