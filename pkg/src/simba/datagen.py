"""Synthetic KPI streams for a 7-site hexagonal deployment with injected faults.

The radio model is intentionally simple and not calibrated against 3GPP
channel models: log-distance path loss, a parabolic antenna pattern that is
only active while an interference fault mis-steers a cell, equal sharing of
Shannon-rate capacity among attached users, and random-waypoint pedestrians.
Faults only need to be detectable and distinguishable.

Handover uses an A3 rule with zero hysteresis: measurements taken during
second ``t`` decide the serving cell for second ``t + 1``.  Users therefore
report one second of degraded KPIs on a cell that has just failed before
they move away from it.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

log = logging.getLogger(__name__)

NUM_CELLS = 7
SITE_HEIGHT_M = 25.0
UE_HEIGHT_M = 1.5
G_MAX_DBI = 8.0
A_MAX_DB = 30.0
NOISE_FIGURE_DB = 5.0
SINR_FLOOR_DB = -10.0
SPECTRAL_EFFICIENCY = 0.75

NORMAL_TX_DBM = 41.0
NORMAL_DOWNTILT_DEG = 90.0
NORMAL_AZIMUTH_BW_DEG = 65.0
NORMAL_ELEVATION_BW_DEG = 65.0

FAULT_MIN_S = 30
FAULT_MAX_S = 40


class FaultType(enum.IntEnum):
    NONE = 0
    EPR = 1
    INTERF = 2

    @property
    def label(self) -> str:
        return self.name


FAULT_OVERRIDES = {
    FaultType.EPR: dict(tx_power_dbm=10.0),
    FaultType.INTERF: dict(tx_power_dbm=33.0, downtilt_deg=15.0, azimuth_bw_deg=70.0, elevation_bw_deg=10.0),
}


@dataclass(frozen=True)
class Site:
    cell_id: int
    x: float
    y: float
    tx_power_dbm: float = NORMAL_TX_DBM
    downtilt_deg: float = NORMAL_DOWNTILT_DEG
    azimuth_bw_deg: float = NORMAL_AZIMUTH_BW_DEG
    elevation_bw_deg: float = NORMAL_ELEVATION_BW_DEG
    height_m: float = SITE_HEIGHT_M


@dataclass(frozen=True)
class Deployment:
    sites: tuple[Site, ...]
    inter_site_distance: float = 200.0
    carrier_freq_ghz: float = 4.0
    bandwidth_mhz: float = 10.0

    @property
    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.sites])

    def neighbors(self, cell_id: int) -> list[int]:
        """Sites at one inter-site distance from ``cell_id``."""
        pos = self.positions
        d = np.hypot(*(pos - pos[cell_id]).T)
        return [int(i) for i in np.flatnonzero(np.abs(d - self.inter_site_distance) < 1e-6)]


@dataclass(frozen=True)
class FaultEvent:
    cell_id: int
    fault_type: FaultType
    start_s: int
    duration_s: int
    tx_power_dbm: float
    downtilt_deg: float | None = None
    azimuth_bw_deg: float | None = None
    elevation_bw_deg: float | None = None
    boresight_deg: float | None = None

    @property
    def end_s(self) -> int:
        return self.start_s + self.duration_s

    def active(self, t: int) -> bool:
        return self.start_s <= t < self.end_s


@dataclass(frozen=True)
class EpisodeConfig:
    users_per_cell: int = 30
    duration_s: int = 3600
    fault_budget_fraction: float = 0.02
    seed: int = 0
    speed_mps: float = 1.5
    inter_site_distance: float = 200.0
    carrier_freq_ghz: float = 4.0
    bandwidth_mhz: float = 10.0

    def __post_init__(self):
        if self.users_per_cell < 1:
            raise ConfigurationError(f"users_per_cell must be >= 1, got {self.users_per_cell}")
        if self.duration_s < 1:
            raise ConfigurationError(f"duration_s must be >= 1, got {self.duration_s}")
        if not 0.0 <= self.fault_budget_fraction <= 0.05:
            raise ConfigurationError(f"fault_budget_fraction must lie in [0, 0.05], got {self.fault_budget_fraction}")
        if self.speed_mps < 0:
            raise ConfigurationError(f"speed_mps must be >= 0, got {self.speed_mps}")
        if self.inter_site_distance <= 0:
            raise ConfigurationError("inter_site_distance must be positive")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# -- geometry and radio primitives ------------------------------------

def build_topology(cfg: EpisodeConfig | None = None) -> Deployment:
    """Center site at the origin and six neighbors on a hexagon of radius ISD."""
    cfg = cfg or EpisodeConfig()
    isd = cfg.inter_site_distance
    sites = [Site(0, 0.0, 0.0)]
    for i in range(6):
        ang = math.radians(60.0 * i)
        sites.append(Site(i + 1, isd * math.cos(ang), isd * math.sin(ang)))
    return Deployment(tuple(sites), isd, cfg.carrier_freq_ghz, cfg.bandwidth_mhz)


def path_loss(distance_m, freq_ghz: float, site_height: float = SITE_HEIGHT_M, ue_height: float = UE_HEIGHT_M):
    """``28 + 22 log10(d3D) + 20 log10(f_GHz)`` with d3D from the horizontal distance."""
    d2 = np.maximum(np.asarray(distance_m, dtype=np.float64), 1.0)
    d3 = np.hypot(d2, site_height - ue_height)
    return 28.0 + 22.0 * np.log10(d3) + 20.0 * np.log10(freq_ghz)


def antenna_gain(azimuth_off, elevation_off, az_bw: float, el_bw: float):
    """Parabolic pattern in dBi: ``8 - min(12 (az/az_bw)^2 + 12 (el/el_bw)^2, 30)``."""
    if np.any(np.asarray(az_bw) <= 0) or np.any(np.asarray(el_bw) <= 0):
        raise ConfigurationError("beamwidths must be positive")
    az = np.asarray(azimuth_off, dtype=np.float64)
    el = np.asarray(elevation_off, dtype=np.float64)
    att = 12.0 * (az / az_bw) ** 2 + 12.0 * (el / el_bw) ** 2
    return G_MAX_DBI - np.minimum(att, A_MAX_DB)


def noise_dbm(bandwidth_mhz: float) -> float:
    return -174.0 + 10.0 * math.log10(bandwidth_mhz * 1e6) + NOISE_FIGURE_DB


def _db_to_lin(x):
    return np.power(10.0, np.asarray(x) / 10.0)


def _lin_to_db(x):
    return 10.0 * np.log10(x)


@dataclass
class CellState:
    """Per-cell radio parameters at one instant (normal values unless faulted)."""

    tx_power_dbm: np.ndarray
    directional: np.ndarray  # bool: antenna pattern active
    boresight_deg: np.ndarray
    downtilt_deg: np.ndarray
    azimuth_bw_deg: np.ndarray
    elevation_bw_deg: np.ndarray

    @classmethod
    def normal(cls, n: int = NUM_CELLS) -> "CellState":
        return cls(
            np.full(n, NORMAL_TX_DBM),
            np.zeros(n, dtype=bool),
            np.zeros(n),
            np.full(n, NORMAL_DOWNTILT_DEG),
            np.full(n, NORMAL_AZIMUTH_BW_DEG),
            np.full(n, NORMAL_ELEVATION_BW_DEG),
        )

    @classmethod
    def with_faults(cls, faults, n: int = NUM_CELLS) -> "CellState":
        st = cls.normal(n)
        for ev in faults:
            c = ev.cell_id
            st.tx_power_dbm[c] = ev.tx_power_dbm
            if ev.fault_type == FaultType.INTERF:
                st.directional[c] = True
                st.boresight_deg[c] = ev.boresight_deg or 0.0
                st.downtilt_deg[c] = ev.downtilt_deg
                st.azimuth_bw_deg[c] = ev.azimuth_bw_deg
                st.elevation_bw_deg[c] = ev.elevation_bw_deg
        return st


def rsrp_matrix(deployment: Deployment, ue_xy: np.ndarray, cells: CellState) -> tuple[np.ndarray, np.ndarray]:
    """Received power from every cell at every user, ``[U, C]`` dBm, and horizontal distances."""
    sites = deployment.positions
    delta = ue_xy[:, None, :] - sites[None, :, :]
    d2 = np.hypot(delta[..., 0], delta[..., 1])
    pl = path_loss(d2, deployment.carrier_freq_ghz)
    depression = np.degrees(np.arctan2(SITE_HEIGHT_M - UE_HEIGHT_M, np.maximum(d2, 1.0)))
    el_off = depression - cells.downtilt_deg[None, :]
    az_off = np.zeros_like(d2)
    if cells.directional.any():
        bearing = np.degrees(np.arctan2(delta[..., 1], delta[..., 0]))
        steered = (bearing - cells.boresight_deg[None, :] + 180.0) % 360.0 - 180.0
        az_off = np.where(cells.directional[None, :], steered, 0.0)
    gain = antenna_gain(az_off, el_off, cells.azimuth_bw_deg[None, :], cells.elevation_bw_deg[None, :])
    return cells.tx_power_dbm[None, :] + gain - pl, d2


def compute_kpis(
    deployment: Deployment,
    ue_xy: np.ndarray,
    serving: np.ndarray,
    cells: CellState | None = None,
    active: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Serving-cell KPIs for every user.

    ``active`` optionally masks which cells transmit (all by default).
    Returns arrays ``rsrp_dbm, rsrq_db, sinr_db, throughput_bps, distance_m``
    plus ``rsrp_all`` (``[U, C]``) used for the handover decision.
    """
    cells = cells or CellState.normal(len(deployment.sites))
    ue_xy = np.atleast_2d(np.asarray(ue_xy, dtype=np.float64))
    serving = np.atleast_1d(np.asarray(serving, dtype=np.int64))
    rsrp_all, d2 = rsrp_matrix(deployment, ue_xy, cells)
    lin = _db_to_lin(rsrp_all)
    if active is not None:
        lin = lin * np.asarray(active, dtype=bool)[None, :]
    rows = np.arange(len(serving))
    rsrp = rsrp_all[rows, serving]
    serv_lin = lin[rows, serving]
    total = lin.sum(axis=1)
    noise_lin = _db_to_lin(noise_dbm(deployment.bandwidth_mhz))
    sinr = rsrp - _lin_to_db(total - serv_lin + noise_lin)
    rsrq = rsrp - _lin_to_db(total)
    n_cells = len(deployment.sites)
    load = np.bincount(serving, minlength=n_cells)[serving]
    bw_hz = deployment.bandwidth_mhz * 1e6
    rate = SPECTRAL_EFFICIENCY * np.log2(1.0 + _db_to_lin(np.maximum(sinr, SINR_FLOOR_DB)))
    throughput = bw_hz / load * rate
    return dict(
        rsrp_dbm=rsrp,
        rsrq_db=rsrq,
        sinr_db=sinr,
        throughput_bps=throughput,
        distance_m=d2[rows, serving],
        rsrp_all=rsrp_all,
    )


def a3_handover(serving: np.ndarray, rsrp_all: np.ndarray, hysteresis_db: float = 0.0) -> np.ndarray:
    """Move each user to the strongest cell if it beats the serving cell by more than the hysteresis."""
    best = np.argmax(rsrp_all, axis=1)
    rows = np.arange(len(serving))
    switch = rsrp_all[rows, best] > rsrp_all[rows, serving] + hysteresis_db
    return np.where(switch, best, serving)


# -- fault scheduling ---------------------------------------------------

def schedule_faults(cfg: EpisodeConfig, rng: np.random.Generator, deployment: Deployment | None = None) -> list[FaultEvent]:
    """Draw fault events until no cell has budget left for another one.

    Each draw picks a cell uniformly among those with budget remaining, a fault
    type uniformly, an integer duration in [30, 40] capped by the cell's budget,
    and a start uniformly among the times where it does not overlap (or touch)
    an earlier event on the same cell.
    """
    if cfg.duration_s < 100:
        raise ConfigurationError(f"fault scheduling needs duration_s >= 100, got {cfg.duration_s}")
    deployment = deployment or build_topology(cfg)
    T = cfg.duration_s
    budget = int(math.floor(cfg.fault_budget_fraction * T + 1e-9))
    if budget < FAULT_MIN_S:
        if cfg.fault_budget_fraction > 0:
            log.warning("fault budget of %d s per cell is too small for one event; no faults scheduled", budget)
        return []
    n = len(deployment.sites)
    remaining = np.full(n, budget)
    occupied = np.zeros((n, T + 2), dtype=bool)  # padded by one second on each side
    exhausted = np.zeros(n, dtype=bool)
    events: list[FaultEvent] = []
    while True:
        available = np.flatnonzero((remaining >= FAULT_MIN_S) & ~exhausted)
        if available.size == 0:
            break
        cell = int(rng.choice(available))
        ftype = FaultType.EPR if rng.integers(2) == 0 else FaultType.INTERF
        dur = int(rng.integers(FAULT_MIN_S, min(FAULT_MAX_S, remaining[cell]) + 1))
        # start s occupies padded slots s+1..s+dur; require s..s+dur+1 free
        busy = np.concatenate([[0], np.cumsum(occupied[cell])])
        starts = np.arange(0, T - dur + 1)
        clear = (busy[starts + dur + 2] - busy[starts]) == 0
        if not clear.any():
            exhausted[cell] = True
            continue
        start = int(rng.choice(starts[clear]))
        occupied[cell, start + 1 : start + dur + 1] = True
        remaining[cell] -= dur
        overrides = dict(FAULT_OVERRIDES[ftype])
        if ftype == FaultType.INTERF:
            victim = int(rng.choice(deployment.neighbors(cell)))
            src, dst = deployment.sites[cell], deployment.sites[victim]
            overrides["boresight_deg"] = math.degrees(math.atan2(dst.y - src.y, dst.x - src.x))
        events.append(FaultEvent(cell, ftype, start, dur, **overrides))
    events.sort(key=lambda e: (e.start_s, e.cell_id))
    return events


def label_matrix(events: list[FaultEvent], duration_s: int, n_cells: int = NUM_CELLS) -> np.ndarray:
    """``[T, C]`` fault codes (``FaultType`` values) per second per cell."""
    labels = np.zeros((duration_s, n_cells), dtype=np.int8)
    for ev in events:
        labels[ev.start_s : min(ev.end_s, duration_s), ev.cell_id] = int(ev.fault_type)
    return labels


# -- mobility -----------------------------------------------------------

def _uniform_disc(rng: np.random.Generator, centers: np.ndarray, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(len(centers)))
    th = rng.uniform(0.0, 2.0 * np.pi, len(centers))
    return centers + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


class RandomWaypoint:
    """Pedestrians wandering between uniform waypoints inside their home cell's disc, no pauses."""

    def __init__(self, rng: np.random.Generator, homes: np.ndarray, radius: float, speed: float):
        self.rng = rng
        self.homes = homes
        self.radius = radius
        self.speed = speed
        self.pos = _uniform_disc(rng, homes, radius)
        self.target = _uniform_disc(rng, homes, radius)

    def step(self, dt: float = 1.0) -> None:
        delta = self.target - self.pos
        dist = np.hypot(delta[:, 0], delta[:, 1])
        travel = self.speed * dt
        arrived = dist <= travel
        frac = np.where(arrived, 1.0, travel / np.maximum(dist, 1e-12))
        self.pos = self.pos + delta * frac[:, None]
        if arrived.any():
            idx = np.flatnonzero(arrived)
            self.target[idx] = _uniform_disc(self.rng, self.homes[idx], self.radius)


# -- episode --------------------------------------------------------------

RECORD_COLUMNS = (
    "t_s",
    "user_id",
    "serving_cell",
    "rsrp_dbm",
    "rsrq_db",
    "sinr_db",
    "throughput_bps",
    "distance_m",
    "ue_x",
    "ue_y",
)
_RECORD_FMT = ["%d", "%d", "%d", "%.4f", "%.4f", "%.4f", "%.2f", "%.3f", "%.3f", "%.3f"]


@dataclass(frozen=True)
class KpiRecord:
    t_s: int
    user_id: int
    serving_cell: int
    rsrp_dbm: float
    rsrq_db: float
    sinr_db: float
    throughput_bps: float
    distance_m: float
    ue_x: float
    ue_y: float


@dataclass
class KpiTable:
    """Column-oriented store of :class:`KpiRecord` rows."""

    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.columns["t_s"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def record(self, i: int) -> KpiRecord:
        kw = {c: self.columns[c][i] for c in RECORD_COLUMNS}
        for c in ("t_s", "user_id", "serving_cell"):
            kw[c] = int(kw[c])
        return KpiRecord(**{k: (v if isinstance(v, int) else float(v)) for k, v in kw.items()})

    @classmethod
    def from_records(cls, records: list[KpiRecord]) -> "KpiTable":
        cols = {c: np.array([getattr(r, c) for r in records]) for c in RECORD_COLUMNS}
        for c in ("t_s", "user_id", "serving_cell"):
            cols[c] = cols[c].astype(np.int64)
        return cls(cols)


@dataclass
class Episode:
    config: EpisodeConfig
    deployment: Deployment
    faults: list[FaultEvent]
    records: KpiTable
    labels: np.ndarray  # [T, C] FaultType codes


class EpisodeSimulator:
    """Second-by-second simulation; :meth:`run` produces a full :class:`Episode`."""

    def __init__(self, cfg: EpisodeConfig):
        self.cfg = cfg
        self.deployment = build_topology(cfg)
        seeds = np.random.SeedSequence(cfg.seed).spawn(2)
        self.fault_rng = np.random.default_rng(seeds[0])
        mob_rng = np.random.default_rng(seeds[1])
        n = len(self.deployment.sites)
        self.faults = schedule_faults(cfg, self.fault_rng, self.deployment) if cfg.duration_s >= 100 else []
        self.home = np.repeat(np.arange(n), cfg.users_per_cell)
        radius = cfg.inter_site_distance / math.sqrt(3.0)
        self.mobility = RandomWaypoint(mob_rng, self.deployment.positions[self.home], radius, cfg.speed_mps)
        self.t = 0
        self.serving: np.ndarray | None = None
        self.last_rsrp_all: np.ndarray | None = None

    def active_faults(self, t: int) -> list[FaultEvent]:
        return [ev for ev in self.faults if ev.active(t)]

    def step(self) -> dict[str, np.ndarray]:
        """Measure at the current second, hand over for the next one, then move users."""
        cells = CellState.with_faults(self.active_faults(self.t), len(self.deployment.sites))
        pos = self.mobility.pos
        if self.serving is None:
            rsrp_all, _ = rsrp_matrix(self.deployment, pos, cells)
            self.serving = np.argmax(rsrp_all, axis=1)
        kpi = compute_kpis(self.deployment, pos, self.serving, cells)
        kpi["serving_cell"] = self.serving.copy()
        kpi["ue_xy"] = pos.copy()
        kpi["t_s"] = self.t
        self.last_rsrp_all = kpi["rsrp_all"]
        self.serving = a3_handover(self.serving, kpi["rsrp_all"])
        self.mobility.step(1.0)
        self.t += 1
        return kpi

    def run(self) -> Episode:
        cfg = self.cfg
        T, U = cfg.duration_s, len(self.home)
        n = len(self.deployment.sites)
        cols = {c: np.empty(T * U) for c in RECORD_COLUMNS}
        for c in ("t_s", "user_id", "serving_cell"):
            cols[c] = np.empty(T * U, dtype=np.int64)
        users = np.arange(U)
        for t in range(T):
            kpi = self.step()
            sl = slice(t * U, (t + 1) * U)
            cols["t_s"][sl] = t
            cols["user_id"][sl] = users
            cols["serving_cell"][sl] = kpi["serving_cell"]
            for c in ("rsrp_dbm", "rsrq_db", "sinr_db", "throughput_bps", "distance_m"):
                cols[c][sl] = kpi[c]
            cols["ue_x"][sl] = kpi["ue_xy"][:, 0]
            cols["ue_y"][sl] = kpi["ue_xy"][:, 1]
        return Episode(cfg, self.deployment, list(self.faults), KpiTable(cols), label_matrix(self.faults, T, n))


def simulate_episode(cfg: EpisodeConfig) -> Episode:
    return EpisodeSimulator(cfg).run()


# -- file formats -----------------------------------------------------------

LABEL_NAMES = {FaultType.NONE: "NONE", FaultType.EPR: "EPR", FaultType.INTERF: "INTERF"}
LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}


def write_records_csv(table: KpiTable, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(RECORD_COLUMNS) + "\n")
        ints = np.column_stack([table[c] for c in RECORD_COLUMNS[:3]])
        floats = np.column_stack([table[c] for c in RECORD_COLUMNS[3:]])
        mat = np.empty((len(table), len(RECORD_COLUMNS)), dtype=object)
        mat[:, :3] = ints
        mat[:, 3:] = floats
        np.savetxt(fh, mat, fmt=_RECORD_FMT, delimiter=",")


def write_labels_csv(labels: np.ndarray, path) -> None:
    T, n = labels.shape
    with open(path, "w", newline="\n") as fh:
        fh.write("t_s,cell_id,fault\n")
        lines = [f"{t},{c},{LABEL_NAMES[FaultType(int(labels[t, c]))]}" for t in range(T) for c in range(n)]
        fh.write("\n".join(lines) + "\n")


def read_records_csv(path) -> KpiTable:
    import pandas as pd

    df = pd.read_csv(path)
    missing = [c for c in RECORD_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    cols = {c: df[c].to_numpy() for c in RECORD_COLUMNS}
    for c in ("t_s", "user_id", "serving_cell"):
        cols[c] = cols[c].astype(np.int64)
    for c in RECORD_COLUMNS[3:]:
        cols[c] = cols[c].astype(np.float64)
    return KpiTable(cols)


def read_labels_csv(path) -> np.ndarray:
    import pandas as pd

    df = pd.read_csv(path)
    if list(df.columns) != ["t_s", "cell_id", "fault"]:
        raise DataError(f"{path}: expected header t_s,cell_id,fault")
    unknown = sorted(set(df["fault"]) - set(LABEL_CODES))
    if unknown:
        raise DataError(f"{path}: unknown fault labels {unknown}")
    T = int(df["t_s"].max()) + 1
    n = int(df["cell_id"].max()) + 1
    labels = np.zeros((T, n), dtype=np.int8)
    codes = df["fault"].map(lambda s: int(LABEL_CODES[s]))
    labels[df["t_s"].to_numpy(), df["cell_id"].to_numpy()] = codes.to_numpy()
    return labels


def write_episode(episode: Episode, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec, lab = out / "records.csv", out / "labels.csv"
    write_records_csv(episode.records, rec)
    write_labels_csv(episode.labels, lab)
    return {"records": rec, "labels": lab}


def with_overrides(cfg: EpisodeConfig, **kw) -> EpisodeConfig:
    return replace(cfg, **kw)
