"""Domain types and bistatic geometry.

Conventions: 2D global frame in metres, angles in radians. AoA and AoD are
signed angles measured counter-clockwise from the respective array
boresight, wrapped to (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class ConfigurationError(ValueError):
    """Raised when a system or scene configuration is inconsistent."""


class DegenerateGeometryError(ValueError):
    """Raised for geometries where the bistatic mapping is undefined."""


def wrap_angle(angle):
    """Wrap angle(s) to (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def _point(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2D point, got shape {np.shape(value)}")
    return arr


def _unit(value) -> np.ndarray:
    arr = _point(value)
    norm = np.linalg.norm(arr)
    if norm == 0:
        raise ValueError("boresight vector must be nonzero")
    return arr / norm


@dataclass(frozen=True)
class SceneGeometry:
    """Tx/Rx placement, array orientation and the monitored area.

    ``area`` is ``(xmin, ymin, xmax, ymax)``. Boresights left as ``None``
    point from each node toward the area centre.
    """

    tx_position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0]))
    rx_position: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0]))
    area: tuple = (0.0, 0.0, 10.0, 10.0)
    tx_boresight: np.ndarray | None = None
    rx_boresight: np.ndarray | None = None

    def __post_init__(self):
        tx = _point(self.tx_position)
        rx = _point(self.rx_position)
        area = tuple(float(v) for v in self.area)
        if len(area) != 4 or area[2] < area[0] or area[3] < area[1]:
            raise ConfigurationError(f"area must be (xmin, ymin, xmax, ymax), got {self.area}")
        if np.linalg.norm(rx - tx) <= 0:
            raise ConfigurationError("Tx and Rx must not coincide (baseline > 0)")
        centre = np.array([(area[0] + area[2]) / 2, (area[1] + area[3]) / 2])
        tx_b = _unit(centre - tx if self.tx_boresight is None else self.tx_boresight)
        rx_b = _unit(centre - rx if self.rx_boresight is None else self.rx_boresight)
        object.__setattr__(self, "tx_position", tx)
        object.__setattr__(self, "rx_position", rx)
        object.__setattr__(self, "area", area)
        object.__setattr__(self, "tx_boresight", tx_b)
        object.__setattr__(self, "rx_boresight", rx_b)

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.rx_position - self.tx_position))

    @property
    def tx_boresight_angle(self) -> float:
        return float(np.arctan2(self.tx_boresight[1], self.tx_boresight[0]))

    @property
    def rx_boresight_angle(self) -> float:
        return float(np.arctan2(self.rx_boresight[1], self.rx_boresight[0]))

    @property
    def vertices(self) -> np.ndarray:
        x0, y0, x1, y1 = self.area
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def max_bistatic_range(self) -> float:
        """Largest Tx-target-Rx path over the area.

        The bistatic range is convex in position, so the maximum over a
        rectangle is attained at one of its vertices.
        """
        v = self.vertices
        sums = (np.linalg.norm(v - self.tx_position, axis=1)
                + np.linalg.norm(v - self.rx_position, axis=1))
        return float(sums.max())

    def sector(self, node: str = "rx") -> tuple[float, float]:
        """Angular interval, relative to the node boresight, covering the area."""
        if node == "rx":
            origin, bore = self.rx_position, self.rx_boresight_angle
        elif node == "tx":
            origin, bore = self.tx_position, self.tx_boresight_angle
        else:
            raise ValueError(f"node must be 'tx' or 'rx', got {node!r}")
        d = self.vertices - origin
        keep = np.linalg.norm(d, axis=1) > 1e-9
        ang = wrap_angle(np.arctan2(d[keep, 1], d[keep, 0]) - bore)
        return float(np.min(ang)), float(np.max(ang))

    def contains(self, point) -> bool:
        x, y = _point(point)
        x0, y0, x1, y1 = self.area
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass(frozen=True)
class TargetState:
    position: np.ndarray
    speed_vector: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rcs: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", _point(self.position))
        object.__setattr__(self, "speed_vector", _point(self.speed_vector))
        if self.rcs < 0:
            raise ValueError(f"rcs must be nonnegative, got {self.rcs}")
        object.__setattr__(self, "rcs", float(self.rcs))


@dataclass(frozen=True)
class BistaticParams:
    r_tx: float
    r_rx: float
    aod: float
    aoa: float
    bistatic_range: float
    delay: float
    doppler: float
    bistatic_angle: float
    velocity_bisector_angle: float


@dataclass(frozen=True)
class SystemConfig:
    """OFDM/array system parameters.

    ``tx_power_gain`` is the product of transmit power and the total Tx
    array gain toward the target (beamforming included), in watts.
    ``snr_subcarriers`` selects whether the link SNR divides the power over
    the active subcarriers (``"active"``) or all of them (``"total"``).
    """

    f_c: float = 0.3e12
    subcarrier_spacing: float = 6.25e6
    total_subcarriers: int = 320
    active_subcarriers: int = 64
    symbols: int = 50
    n_tx: int = 64
    n_rx: int = 64
    tx_power_gain: float = 1.0
    rx_element_gain: float = 1.0
    noise_psd: float = 4e-20
    cp_duration: float = 19.5e-9
    bandwidth_ratio: int = 5
    snr_subcarriers: str = "active"

    def __post_init__(self):
        for name in ("total_subcarriers", "active_subcarriers", "symbols",
                     "n_tx", "n_rx", "bandwidth_ratio"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.active_subcarriers > self.total_subcarriers:
            raise ConfigurationError("active_subcarriers exceeds total_subcarriers")
        if self.bandwidth_ratio * self.active_subcarriers > self.total_subcarriers:
            raise ConfigurationError(
                f"bandwidth_ratio * active_subcarriers = "
                f"{self.bandwidth_ratio * self.active_subcarriers} exceeds "
                f"total_subcarriers = {self.total_subcarriers}")
        if self.f_c <= 0 or self.subcarrier_spacing <= 0:
            raise ConfigurationError("carrier frequency and subcarrier spacing must be positive")
        if self.cp_duration < 0:
            raise ConfigurationError("cp_duration must be nonnegative")
        if self.snr_subcarriers not in ("active", "total"):
            raise ConfigurationError("snr_subcarriers must be 'active' or 'total'")

    @property
    def bandwidth(self) -> float:
        return self.total_subcarriers * self.subcarrier_spacing

    @property
    def coarse_bandwidth(self) -> float:
        return self.active_subcarriers * self.subcarrier_spacing

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.subcarrier_spacing + self.cp_duration

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c


def forward_geometry(scene: SceneGeometry, target: TargetState, f_c: float) -> BistaticParams:
    """Bistatic parameters of a point target."""
    p = target.position
    to_tx = scene.tx_position - p
    to_rx = scene.rx_position - p
    r_tx = float(np.linalg.norm(to_tx))
    r_rx = float(np.linalg.norm(to_rx))
    if r_tx < 1e-12 or r_rx < 1e-12:
        raise DegenerateGeometryError("target coincides with the Tx or Rx node")

    aod = wrap_angle(np.arctan2(-to_tx[1], -to_tx[0]) - scene.tx_boresight_angle)
    aoa = wrap_angle(np.arctan2(-to_rx[1], -to_rx[0]) - scene.rx_boresight_angle)
    u_tx, u_rx = to_tx / r_tx, to_rx / r_rx
    beta = float(np.arccos(np.clip(u_tx @ u_rx, -1.0, 1.0)))

    bistatic_range = r_tx + r_rx
    speed = float(np.linalg.norm(target.speed_vector))
    bisector = u_tx + u_rx
    if speed == 0.0 or np.linalg.norm(bisector) < 1e-15:
        # static target, or forward scatter on the baseline (cos(beta/2) = 0)
        delta = 0.0 if speed == 0.0 else float(np.pi / 2)
        doppler = 0.0
    else:
        cos_delta = (target.speed_vector @ bisector) / (speed * np.linalg.norm(bisector))
        delta = float(np.arccos(np.clip(cos_delta, -1.0, 1.0)))
        lam = SPEED_OF_LIGHT / f_c
        doppler = 2 * speed / lam * np.cos(delta) * np.cos(beta / 2)

    return BistaticParams(
        r_tx=r_tx,
        r_rx=r_rx,
        aod=aod,
        aoa=aoa,
        bistatic_range=bistatic_range,
        delay=bistatic_range / SPEED_OF_LIGHT,
        doppler=float(doppler),
        bistatic_angle=beta,
        velocity_bisector_angle=delta,
    )


def rx_distance(r_hat: float, aoa_hat: float, scene: SceneGeometry) -> float:
    """Target-to-Rx distance from bistatic range and AoA (ellipse/ray intersection)."""
    L = scene.baseline
    if r_hat <= L:
        raise DegenerateGeometryError(
            f"bistatic range {r_hat!r} m does not exceed the baseline {L!r} m")
    psi = _angle_from_baseline(aoa_hat, scene)
    # r + L sin(psi - pi/2) == r - L cos(psi)
    denom = 2.0 * (r_hat - L * np.cos(psi))
    if abs(denom) < 1e-12:
        raise DegenerateGeometryError("singular geometry: ellipse/ray intersection undefined")
    return float((r_hat ** 2 - L ** 2) / denom)


def _angle_from_baseline(aoa, scene: SceneGeometry):
    tx_dir = scene.tx_position - scene.rx_position
    baseline_angle = np.arctan2(tx_dir[1], tx_dir[0])
    return aoa + scene.rx_boresight_angle - baseline_angle


def position_from_bistatic(r_hat: float, aoa_hat: float, scene: SceneGeometry) -> np.ndarray:
    """Global target position from bistatic range and AoA at the Rx."""
    gamma = rx_distance(r_hat, aoa_hat, scene)
    theta_g = aoa_hat + scene.rx_boresight_angle
    return scene.rx_position + gamma * np.array([np.cos(theta_g), np.sin(theta_g)])


def position_jacobian(delay: float, aoa: float, scene: SceneGeometry) -> np.ndarray:
    """Analytic Jacobian d(x, y)/d(delay, aoa) of the inverse bistatic map."""
    c, L = SPEED_OF_LIGHT, scene.baseline
    r = c * delay
    psi = _angle_from_baseline(aoa, scene)
    D = r - L * np.cos(psi)
    gamma = rx_distance(r, aoa, scene)
    dgamma_dr = (r ** 2 - 2 * r * L * np.cos(psi) + L ** 2) / (2 * D ** 2)
    dgamma_dpsi = -(r ** 2 - L ** 2) * L * np.sin(psi) / (2 * D ** 2)
    theta_g = aoa + scene.rx_boresight_angle
    u = np.array([np.cos(theta_g), np.sin(theta_g)])
    u_perp = np.array([-np.sin(theta_g), np.cos(theta_g)])
    jac = np.empty((2, 2))
    jac[:, 0] = c * dgamma_dr * u
    jac[:, 1] = dgamma_dpsi * u + gamma * u_perp
    return jac


def measurement_jacobian(position, scene: SceneGeometry) -> np.ndarray:
    """Analytic Jacobian d(delay, aoa)/d(x, y) of the forward map."""
    p = _point(position)
    d_tx = p - scene.tx_position
    d_rx = p - scene.rx_position
    r_tx, r_rx = np.linalg.norm(d_tx), np.linalg.norm(d_rx)
    if r_tx < 1e-12 or r_rx < 1e-12:
        raise DegenerateGeometryError("target coincides with the Tx or Rx node")
    jac = np.empty((2, 2))
    jac[0] = (d_tx / r_tx + d_rx / r_rx) / SPEED_OF_LIGHT
    jac[1] = np.array([-d_rx[1], d_rx[0]]) / r_rx ** 2
    return jac


def cp_from_area(scene: SceneGeometry) -> float:
    """Cyclic prefix covering the bistatic delay spread of the area, in seconds."""
    return (scene.max_bistatic_range() - scene.baseline) / SPEED_OF_LIGHT
