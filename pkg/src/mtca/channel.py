"""Cluster-based multipath channel model for a ground-to-air MISO link.

The base station (a uniform planar array) is fixed; the UAV receiver is an
ideal point source flying a horizontal circle around the mast.  Each
sub-path contributes

    alpha * exp(j*(2*pi*(nu*t - f*tau) + phi0)) * a(aod_azimuth, aod_elevation)

to the response of every transmit antenna, where ``a`` is the array
response element and ``nu`` the Doppler shift seen by the moving receiver.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class Scenario(enum.IntEnum):
    UMi = 0
    UMa = 1
    RMa = 2


class Condition(enum.IntEnum):
    LOS = 0
    NLOS = 1


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: Scenario
    carrier_freq: float
    bandwidth: float
    num_subcarriers: int
    tx_position: tuple[float, float, float]
    num_clusters: int
    subpaths_per_cluster: int
    delay_spread: float
    angle_spread_deg: float
    rician_k_db: float

    def __post_init__(self):
        if self.num_subcarriers < 1 or self.num_clusters < 1 or self.subpaths_per_cluster < 1:
            raise ValueError("subcarrier, cluster and sub-path counts must be >= 1")
        if self.delay_spread <= 0:
            raise ValueError("delay_spread must be positive")
        if self.carrier_freq <= 0 or self.bandwidth <= 0:
            raise ValueError("carrier_freq and bandwidth must be positive")

    def subcarrier_offsets(self) -> np.ndarray:
        """Baseband subcarrier centres, evenly spaced and symmetric about 0."""
        spacing = self.bandwidth / self.num_subcarriers
        return (np.arange(self.num_subcarriers) - (self.num_subcarriers - 1) / 2) * spacing


# Values not fixed by the measurement campaign (delay/angle spread, K-factor)
# are artifact defaults chosen so that the three scenarios stay separable.
SCENARIO_DEFAULTS: dict[Scenario, dict] = {
    Scenario.UMi: dict(carrier_freq=2.0e9, tx_position=(0.0, 0.0, 10.0),
                       delay_spread=100e-9, angle_spread_deg=20.0, rician_k_db=9.0),
    Scenario.UMa: dict(carrier_freq=2.0e9, tx_position=(0.0, 0.0, 25.0),
                       delay_spread=300e-9, angle_spread_deg=15.0, rician_k_db=10.0),
    Scenario.RMa: dict(carrier_freq=0.7e9, tx_position=(0.0, 0.0, 35.0),
                       delay_spread=50e-9, angle_spread_deg=10.0, rician_k_db=7.0),
}

COMMON_DEFAULTS = dict(bandwidth=10e6, num_subcarriers=100, num_clusters=10, subpaths_per_cluster=15)


def make_scenario_config(scenario_id: Scenario | str, **overrides) -> ScenarioConfig:
    """Return the simulation parameters of one deployment scenario.

    Keyword overrides replace individual fields (e.g. ``num_subcarriers=16``).
    """
    if isinstance(scenario_id, str):
        scenario_id = Scenario[scenario_id]
    params = dict(COMMON_DEFAULTS)
    params.update(SCENARIO_DEFAULTS[Scenario(scenario_id)])
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    params.update(overrides)
    params["tx_position"] = tuple(float(v) for v in params["tx_position"])
    return ScenarioConfig(scenario_id=Scenario(scenario_id), **params)


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 2
    cols: int = 4
    element_spacing: float = 0.5  # wavelengths

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array needs at least one row and one column")
        if self.element_spacing <= 0:
            raise ValueError("element_spacing must be positive")

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class Trajectory:
    """Horizontal circle through ``start_position`` around the mast axis."""

    start_position: tuple[float, float, float] = (20.0, 10.0, 50.0)
    speed: float = 45.0
    duration: float = 20.0
    sample_rate: float = 1000.0
    axis: tuple[float, float] = (0.0, 0.0)  # ground projection of the transmitter
    kind: str = "Circular"

    def __post_init__(self):
        if self.kind != "Circular":
            raise ValueError(f"unsupported trajectory kind {self.kind!r}")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        steps = self.duration * self.sample_rate
        if abs(steps - round(steps)) > 1e-9 or steps < 1:
            raise ValueError("duration * sample_rate must be a positive integer")
        if self.radius == 0:
            raise ValueError("start position lies on the circle axis")

    @property
    def num_steps(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.axis[0], self.axis[1], self.start_position[2]])

    @property
    def radius(self) -> float:
        return math.hypot(self.start_position[0] - self.axis[0], self.start_position[1] - self.axis[1])

    @property
    def period(self) -> float:
        return math.inf if self.speed == 0 else 2 * math.pi * self.radius / self.speed

    def _phase(self, t: float) -> float:
        start = math.atan2(self.start_position[1] - self.axis[1], self.start_position[0] - self.axis[0])
        return start + self.speed / self.radius * t

    def velocity(self, t: float) -> np.ndarray:
        """Velocity vector at time ``t`` (counter-clockwise motion)."""
        psi = self._phase(t)
        return self.speed * np.array([-math.sin(psi), math.cos(psi), 0.0])

    @classmethod
    def for_transmitter(cls, tx_position, **kwargs) -> "Trajectory":
        return cls(axis=(float(tx_position[0]), float(tx_position[1])), **kwargs)


def rx_position(traj: Trajectory, t: float) -> np.ndarray:
    if not 0.0 <= t <= traj.duration:
        raise ValueError(f"t={t} outside [0, {traj.duration}]")
    psi = traj._phase(t)
    cx, cy, cz = traj.center
    return np.array([cx + traj.radius * math.cos(psi), cy + traj.radius * math.sin(psi), cz])


def doppler_shift(speed: float, gamma: float, carrier_freq: float) -> float:
    # sin(pi/2 - gamma) is cos(gamma) but vanishes exactly at gamma = pi/2
    return speed * math.sin(math.pi / 2 - gamma) * carrier_freq / SPEED_OF_LIGHT


def steering_element(geometry: ArrayGeometry, antenna_index: int, azimuth: float, elevation: float) -> complex:
    """Element ``antenna_index`` (1-based) of the array response vector.

    The phase progresses linearly over the row-major flattened element index.
    """
    if not 1 <= antenna_index <= geometry.num_elements:
        raise IndexError(f"antenna_index {antenna_index} outside 1..{geometry.num_elements}")
    phase = 2 * math.pi * (antenna_index - 1) * geometry.element_spacing * math.sin(elevation) * math.cos(azimuth)
    return complex(math.cos(phase), math.sin(phase))


def steering_matrix(geometry: ArrayGeometry, azimuth: np.ndarray, elevation: np.ndarray) -> np.ndarray:
    """Vectorised :func:`steering_element` for all antennas: shape (paths, N_a)."""
    idx = np.arange(geometry.num_elements)
    u = np.sin(np.asarray(elevation)) * np.cos(np.asarray(azimuth))
    return np.exp(1j * 2 * np.pi * geometry.element_spacing * np.multiply.outer(u, idx))


@dataclass(frozen=True)
class SubPath:
    alpha: float
    tau: float
    phi0: float
    aod_azimuth: float
    aod_elevation: float
    gamma: float
    nu: float


@dataclass
class ClusterSet:
    clusters: list[list[SubPath]]
    condition: Condition
    scenario_id: Scenario
    seed: int
    direct: SubPath | None = None
    _arrays: dict | None = field(default=None, repr=False, compare=False)

    def paths(self) -> list[SubPath]:
        """All sub-paths in evaluation order: direct path first, then cluster-major."""
        out = [self.direct] if self.direct is not None else []
        for cluster in self.clusters:
            out.extend(cluster)
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        if self._arrays is None:
            paths = self.paths()
            self._arrays = {name: np.array([getattr(p, name) for p in paths], dtype=np.float64)
                            for name in SubPath.__dataclass_fields__}
        return self._arrays

    def diffuse_power(self) -> float:
        return float(sum(p.alpha ** 2 for c in self.clusters for p in c))


def _wrap(angle):
    return np.mod(angle + np.pi, 2 * np.pi) - np.pi


def _reflect_zenith(theta):
    # fold into [0, pi]
    theta = np.mod(theta, 2 * np.pi)
    return np.where(theta > np.pi, 2 * np.pi - theta, theta)


def _direction(azimuth, zenith):
    return np.stack([np.sin(zenith) * np.cos(azimuth),
                     np.sin(zenith) * np.sin(azimuth),
                     np.cos(zenith)], axis=-1)


def draw_cluster_set(config: ScenarioConfig, condition: Condition, geometry: ArrayGeometry,
                     traj: Trajectory, t0: float, seed: int) -> ClusterSet:
    """Draw one realization of the multipath parameters at time ``t0``.

    Delays follow an exponential power-delay profile with 3 dB lognormal
    cluster shadowing; departure angles scatter around the geometric
    transmitter-to-receiver direction.  Under LOS an extra direct path is
    added with Rician K-factor ``config.rician_k_db`` and the total power is
    normalised to one.
    """
    condition = Condition(condition)
    rng = np.random.default_rng(seed)
    n_c, n_m = config.num_clusters, config.subpaths_per_cluster
    ds = config.delay_spread
    spread = math.radians(config.angle_spread_deg)

    tx = np.asarray(config.tx_position, dtype=np.float64)
    rx = rx_position(traj, t0)
    link = rx - tx
    distance = float(np.linalg.norm(link))
    los_az = math.atan2(link[1], link[0])
    los_zen = math.acos(link[2] / distance)
    velocity = traj.velocity(t0)
    heading = velocity / traj.speed if traj.speed > 0 else np.zeros(3)
    # propagation delay of the geometric path; multipath arrives later
    base_delay = distance / SPEED_OF_LIGHT

    excess = np.sort(rng.exponential(ds, size=n_c))
    shadow_db = rng.normal(0.0, 3.0, size=n_c)
    powers = np.exp(-excess / ds) * 10 ** (-shadow_db / 10)
    powers /= powers.sum()

    cl_az = _wrap(los_az + rng.normal(0.0, spread, size=n_c))
    cl_zen = _reflect_zenith(los_zen + rng.normal(0.0, spread, size=n_c))
    az = _wrap(cl_az[:, None] + rng.normal(0.0, spread / 5, size=(n_c, n_m)))
    zen = _reflect_zenith(cl_zen[:, None] + rng.normal(0.0, spread / 5, size=(n_c, n_m)))
    # arrival direction mirrors the departure direction, with extra azimuth scatter
    arr_az = _wrap(az + np.pi + rng.normal(0.0, spread, size=(n_c, n_m)))
    arr_zen = np.pi - zen
    cos_gamma = np.clip(_direction(arr_az, arr_zen) @ heading, -1.0, 1.0)
    gamma = np.arccos(cos_gamma)
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_c, n_m))

    k_lin = 10 ** (config.rician_k_db / 10)
    diffuse_scale = 1.0 / (1.0 + k_lin) if condition is Condition.LOS else 1.0
    alpha = np.sqrt(powers * diffuse_scale / n_m)

    clusters = []
    for n in range(n_c):
        cluster = []
        for m in range(n_m):
            g = float(gamma[n, m])
            cluster.append(SubPath(alpha=float(alpha[n]), tau=float(base_delay + excess[n]),
                                   phi0=float(phases[n, m]), aod_azimuth=float(az[n, m]),
                                   aod_elevation=float(zen[n, m]), gamma=g,
                                   nu=doppler_shift(traj.speed, g, config.carrier_freq)))
        clusters.append(cluster)

    direct = None
    if condition is Condition.LOS:
        # wave arrives at the receiver from the transmitter's direction
        g = math.acos(float(np.clip(-link / distance @ heading, -1.0, 1.0))) if traj.speed > 0 else math.pi / 2
        direct = SubPath(alpha=math.sqrt(k_lin / (1.0 + k_lin)), tau=base_delay,
                         phi0=float(rng.uniform(0.0, 2 * np.pi)), aod_azimuth=los_az,
                         aod_elevation=los_zen, gamma=g,
                         nu=doppler_shift(traj.speed, g, config.carrier_freq))
    return ClusterSet(clusters=clusters, condition=condition, scenario_id=config.scenario_id,
                      seed=seed, direct=direct)


def channel_response(clusters: ClusterSet, geometry: ArrayGeometry, antenna_index: int,
                     t: float, f: float) -> complex:
    """Response of antenna ``antenna_index`` (1-based) at time ``t`` and baseband offset ``f``."""
    if not 1 <= antenna_index <= geometry.num_elements:
        raise IndexError(f"antenna_index {antenna_index} outside 1..{geometry.num_elements}")
    total = 0j
    for p in clusters.paths():
        phase = 2 * math.pi * (p.nu * t - f * p.tau) + p.phi0
        total += p.alpha * complex(math.cos(phase), math.sin(phase)) * steering_element(
            geometry, antenna_index, p.aod_azimuth, p.aod_elevation)
    return total


def response_grid(clusters: ClusterSet, geometry: ArrayGeometry, times: np.ndarray,
                  freqs: np.ndarray) -> np.ndarray:
    """Vectorised channel response over all antennas: shape (N_a, len(times), len(freqs))."""
    a = clusters.arrays()
    coef = a["alpha"] * np.exp(1j * a["phi0"])
    ant = steering_matrix(geometry, a["aod_azimuth"], a["aod_elevation"])  # P x N_a
    time_term = np.exp(1j * 2 * np.pi * np.multiply.outer(a["nu"], times))  # P x T
    freq_term = np.exp(-1j * 2 * np.pi * np.multiply.outer(a["tau"], freqs))  # P x S
    out = np.empty((geometry.num_elements, len(times), len(freqs)), dtype=np.complex128)
    for k in range(geometry.num_elements):
        out[k] = (time_term * (coef * ant[:, k])[:, None]).T @ freq_term
    return out


@dataclass
class CsiTensor:
    values: np.ndarray  # complex, N_a x N_t x N_s
    scenario_label: Scenario
    condition_label: Condition
    seed: int
    sample_rate: float

    def __post_init__(self):
        if self.values.ndim != 3 or min(self.values.shape) == 0:
            raise ValueError(f"CSI tensor must be 3-D and non-empty, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("CSI tensor contains non-finite values")


def generate_csi_block(config: ScenarioConfig, condition: Condition, geometry: ArrayGeometry,
                       traj: Trajectory, seed: int, num_time_steps: int, t0: float = 0.0) -> CsiTensor:
    """Sample the channel on the antenna x time x subcarrier grid starting at ``t0``.

    One multipath realization is drawn at ``t0`` and held fixed over the block.
    """
    if num_time_steps < 1:
        raise ValueError("num_time_steps must be >= 1")
    last = t0 + (num_time_steps - 1) / traj.sample_rate
    if num_time_steps > traj.num_steps or last > traj.duration + 1e-12:
        raise ValueError(f"{num_time_steps} steps from t0={t0} exceed the trajectory duration")
    clusters = draw_cluster_set(config, condition, geometry, traj, t0, seed)
    times = t0 + np.arange(num_time_steps) / traj.sample_rate
    values = response_grid(clusters, geometry, times, config.subcarrier_offsets())
    return CsiTensor(values=values, scenario_label=config.scenario_id,
                     condition_label=Condition(condition), seed=seed, sample_rate=traj.sample_rate)
