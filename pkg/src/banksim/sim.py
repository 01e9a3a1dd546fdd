"""Free-running 3-DOF canal transits with the identified model.

The state vector integrated here is (x, y, psi, u, v, r); sinkage z is held
at the initial value. Internal forces are the measured-force rows without
their acceleration terms, plus a constant surge input X_in.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from joblib import Parallel, delayed

from banksim.coefficients import CoefficientSet
from banksim.errors import BanksimError, ConfigError, DomainError, SingularMassError
from banksim.hydro_model import (
    PSI_LIMIT,
    CanalGeometry,
    PlanarState,
    VesselGeometry,
    bank_columns,
    froude_scale,
    hull_corners,
    water_speed,
)
from banksim.util import atomic_write_text, float_repr, write_json

TRAJECTORY_COLUMNS = ("t", "x", "y", "psi", "u", "v", "r", "Ybank", "Nbank")
SWEEP_COLUMNS = ("y_s0", "x_ground", "side", "t_ground", "y0", "outcome", "error")


class Side(str, enum.Enum):
    PORT = "port"
    STARBOARD = "starboard"

    def mirrored(self) -> Side:
        return Side.PORT if self is Side.STARBOARD else Side.STARBOARD


@dataclass(frozen=True)
class Grounded:
    side: Side
    x_ground: float
    t_ground: float


@dataclass(frozen=True)
class Completed:
    pass


@dataclass(frozen=True)
class DomainStop:
    t_stop: float
    reason: str


Outcome = Union[Grounded, Completed, DomainStop]


@dataclass(frozen=True)
class SimConfig:
    initial: PlanarState
    dt: float = 0.01
    t_max: float = 120.0
    X_in: float = 12.6
    # None falls back to the vessel's dry mass
    surge_mass: Optional[float] = None
    # None falls back to 5% of the beam
    clearance_floor: Optional[float] = None
    current: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= self.dt:
            raise ConfigError(
                f"t_max must be at least dt, got t_max={self.t_max}, dt={self.dt}"
            )
        if self.surge_mass is not None and not self.surge_mass > 0:
            raise ConfigError(f"surge_mass must be positive, got {self.surge_mass}")
        if self.clearance_floor is not None and not self.clearance_floor > 0:
            raise ConfigError(
                f"clearance_floor must be positive, got {self.clearance_floor}"
            )

    def resolved(self, vessel: VesselGeometry) -> SimConfig:
        floor = self.clearance_floor
        return replace(
            self,
            surge_mass=vessel.mass_m if self.surge_mass is None else self.surge_mass,
            clearance_floor=0.05 * vessel.beam_B if floor is None else floor,
        )


@dataclass(frozen=True)
class SimResult:
    times: np.ndarray
    # columns x, y, psi, u, v, r
    states: np.ndarray
    y_bank: np.ndarray
    n_bank: np.ndarray
    outcome: Outcome
    z: float = 0.0

    @property
    def trajectory(self) -> List[PlanarState]:
        return [PlanarState(*row, z=self.z) for row in self.states]

    def summary(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "outcome": type(self.outcome).__name__,
            "steps": int(len(self.times) - 1),
            "t_end": float(self.times[-1]),
            "x_end": float(self.states[-1, 0]),
        }
        if isinstance(self.outcome, Grounded):
            doc.update(
                side=self.outcome.side.value,
                x_ground=self.outcome.x_ground,
                t_ground=self.outcome.t_ground,
            )
        elif isinstance(self.outcome, DomainStop):
            doc.update(t_stop=self.outcome.t_stop, reason=self.outcome.reason)
        return doc


@dataclass(frozen=True)
class SweepPoint:
    y0: float
    y_s0: float
    outcome: str
    side: Optional[Side] = None
    x_ground: Optional[float] = None
    t_ground: Optional[float] = None
    error: str = ""


def mass_matrix(coeffs: CoefficientSet, surge_mass: float) -> np.ndarray:
    return np.array(
        [
            [surge_mass, 0.0, 0.0],
            [0.0, coeffs.b[0], coeffs.b[1]],
            [0.0, coeffs.c[0], coeffs.c[1]],
        ]
    )


def _inverse_mass(coeffs: CoefficientSet, surge_mass: float) -> np.ndarray:
    matrix = mass_matrix(coeffs, surge_mass)
    try:
        inverse = np.linalg.inv(matrix)
    except np.linalg.LinAlgError:
        raise SingularMassError(f"mass matrix is singular: {matrix.tolist()}")
    singular = np.linalg.cond(matrix) > 1 / np.finfo(float).eps
    if not np.all(np.isfinite(inverse)) or singular:
        raise SingularMassError(
            f"mass matrix is numerically singular: {matrix.tolist()}"
        )
    return inverse


def _derivative(
    s: np.ndarray,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
    config: SimConfig,
    z: float,
    mass_inv: np.ndarray,
) -> np.ndarray:
    _, y, psi, u, v, r = s
    a, b, c = coeffs.a, coeffs.b, coeffs.c
    sway, yaw = bank_columns(y, psi, z, water_speed(u, config.current), vessel, canal)
    fx = config.X_in - a[1] * u - a[2] * abs(u) * u
    fy = -(b[2] * v + b[3] * r + b[4] * abs(v) * v + b[5] * abs(r) * r)
    fy += b[6] * float(sway)
    fn = -(c[2] * v + c[3] * r + c[4] * abs(v) * v + c[5] * abs(r) * r)
    fn += c[6] * float(yaw)
    nu_dot = mass_inv @ np.array([fx, fy, fn])
    cos_psi, sin_psi = math.cos(psi), math.sin(psi)
    return np.array([u * cos_psi - v * sin_psi, u * sin_psi + v * cos_psi, r, *nu_dot])


def _rk4(
    s: np.ndarray,
    dt: float,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
    config: SimConfig,
    z: float,
    mass_inv: np.ndarray,
) -> np.ndarray:
    args = (coeffs, vessel, canal, config, z, mass_inv)
    k1 = _derivative(s, *args)
    k2 = _derivative(s + 0.5 * dt * k1, *args)
    k3 = _derivative(s + 0.5 * dt * k2, *args)
    k4 = _derivative(s + dt * k3, *args)
    return s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _vector(state: PlanarState) -> np.ndarray:
    return np.array([state.x, state.y, state.psi, state.u, state.v, state.r])


def step(
    state: PlanarState,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
    config: SimConfig,
) -> PlanarState:
    """Advance one classical Runge-Kutta step of size config.dt."""
    config = config.resolved(vessel)
    assert config.surge_mass is not None
    mass_inv = _inverse_mass(coeffs, config.surge_mass)
    s = _rk4(
        _vector(state), config.dt, coeffs, vessel, canal, config, state.z, mass_inv
    )
    return PlanarState(*s, z=state.z)


def _corner_excursion(
    state: PlanarState, vessel: VesselGeometry, canal: CanalGeometry
) -> Tuple[float, Side]:
    """Signed distance of the outermost hull corner past the bank line, and its side."""
    corners_y = hull_corners(state, vessel)[:, 1]
    top = float(np.max(corners_y))
    bottom = float(np.min(corners_y))
    half = canal.width_W / 2
    if top - half >= -bottom - half:
        return top - half, Side.STARBOARD
    return -bottom - half, Side.PORT


def _midship_clearance(
    state: PlanarState, vessel: VesselGeometry, canal: CanalGeometry
) -> float:
    if abs(state.psi) >= PSI_LIMIT:
        return math.inf
    sec = 1.0 / math.cos(state.psi)
    half = canal.width_W / 2
    return min((half - state.y) * sec, (half + state.y) * sec) - vessel.beam_B / 2


def _bank_log(
    states: np.ndarray,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
    config: SimConfig,
    z: float,
) -> Tuple[np.ndarray, np.ndarray]:
    y_bank = np.full(len(states), np.nan)
    n_bank = np.full(len(states), np.nan)
    for i, (_, y, psi, u, _, _) in enumerate(states):
        try:
            u_w = water_speed(u, config.current)
            sway, yaw = bank_columns(y, psi, z, u_w, vessel, canal)
        except DomainError:
            continue
        y_bank[i] = coeffs.b[6] * float(sway)
        n_bank[i] = coeffs.c[6] * float(yaw)
    return y_bank, n_bank


def run(
    config: SimConfig,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
) -> SimResult:
    """Integrate until grounding, a domain stop, or t_max."""
    log = structlog.get_logger()
    config = config.resolved(vessel)
    assert config.surge_mass is not None and config.clearance_floor is not None
    mass_inv = _inverse_mass(coeffs, config.surge_mass)
    z = config.initial.z
    dt = config.dt
    n_steps = int(math.floor(config.t_max / dt + 1e-9))

    s = _vector(config.initial)
    times = [0.0]
    states = [s]
    outcome: Outcome = Completed()
    excursion, _ = _corner_excursion(config.initial, vessel, canal)
    if excursion >= 0:
        raise DomainError(
            f"initial hull position already touches the bank (y={config.initial.y})"
        )
    if _midship_clearance(config.initial, vessel, canal) < config.clearance_floor:
        outcome = DomainStop(t_stop=0.0, reason="initial clearance below floor")
        n_steps = 0

    for k in range(1, n_steps + 1):
        t = k * dt
        try:
            s_new = _rk4(s, dt, coeffs, vessel, canal, config, z, mass_inv)
        except DomainError as e:
            outcome = DomainStop(t_stop=times[-1], reason=str(e))
            break
        times.append(t)
        states.append(s_new)
        state = PlanarState(*s_new, z=z)
        new_excursion, side = _corner_excursion(state, vessel, canal)
        if new_excursion >= 0:
            rise = new_excursion - excursion
            frac = -excursion / rise if rise > 0 else 1.0
            outcome = Grounded(
                side=side,
                x_ground=float(s[0] + frac * (s_new[0] - s[0])),
                t_ground=float(times[-2] + frac * dt),
            )
            break
        if _midship_clearance(state, vessel, canal) < config.clearance_floor:
            outcome = DomainStop(t_stop=t, reason="midship clearance below floor")
            break
        s, excursion = s_new, new_excursion

    states_arr = np.array(states)
    y_bank, n_bank = _bank_log(states_arr, coeffs, vessel, canal, config, z)
    result = SimResult(
        times=np.array(times),
        states=states_arr,
        y_bank=y_bank,
        n_bank=n_bank,
        outcome=outcome,
        z=z,
    )
    log.debug("Simulation finished", y0=config.initial.y, **result.summary())
    return result


def mirror(state: PlanarState) -> PlanarState:
    """Reflect a state about the canal centreline."""
    return PlanarState(
        x=state.x,
        y=-state.y,
        psi=-state.psi,
        u=state.u,
        v=-state.v,
        r=-state.r,
        z=state.z,
    )


def mirror_config(config: SimConfig) -> SimConfig:
    return replace(config, initial=mirror(config.initial))


def scale_config(
    config: SimConfig, vessel: VesselGeometry, canal: CanalGeometry, lam: float
) -> SimConfig:
    """The Froude-similar run of ``config`` at scale factor lam."""
    _, _, initial = froude_scale(vessel, canal, config.initial, lam)
    root = math.sqrt(lam)
    mass, floor = config.surge_mass, config.clearance_floor
    return replace(
        config,
        initial=initial,
        dt=config.dt * root,
        t_max=config.t_max * root,
        X_in=config.X_in * lam**3,
        surge_mass=None if mass is None else mass * lam**3,
        clearance_floor=None if floor is None else floor * lam,
        current=config.current * root,
    )


def y0_from_clearance(
    y_s0: float, vessel: VesselGeometry, canal: CanalGeometry, psi: float = 0.0
) -> float:
    """Initial offset giving the requested starboard midship clearance."""
    return canal.width_W / 2 - (y_s0 + vessel.beam_B / 2) * math.cos(psi)


def starboard_clearance(
    y0: float, vessel: VesselGeometry, canal: CanalGeometry, psi: float = 0.0
) -> float:
    return (canal.width_W / 2 - y0) / math.cos(psi) - vessel.beam_B / 2


def _sweep_point(
    y0: float,
    base: SimConfig,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
) -> SweepPoint:
    y_s0 = starboard_clearance(y0, vessel, canal, base.initial.psi)
    config = replace(base, initial=replace(base.initial, y=y0))
    try:
        result = run(config, coeffs, vessel, canal)
    except (BanksimError, ValueError) as e:
        return SweepPoint(y0=y0, y_s0=y_s0, outcome="Error", error=str(e))
    outcome = result.outcome
    if isinstance(outcome, Grounded):
        return SweepPoint(
            y0=y0,
            y_s0=y_s0,
            outcome="Grounded",
            side=outcome.side,
            x_ground=outcome.x_ground,
            t_ground=outcome.t_ground,
        )
    return SweepPoint(y0=y0, y_s0=y_s0, outcome=type(outcome).__name__)


def sweep_grounding(
    y0s: Sequence[float],
    base: SimConfig,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
    jobs: int = 1,
) -> List[SweepPoint]:
    """One run per initial offset.

    Failures are recorded per point and the sweep carries on.
    """
    log = structlog.get_logger()
    if jobs == 1:
        points = [_sweep_point(y0, base, coeffs, vessel, canal) for y0 in y0s]
    else:
        with Parallel(n_jobs=jobs) as parallel:
            points = parallel(
                delayed(_sweep_point)(float(y0), base, coeffs, vessel, canal)
                for y0 in y0s
            )
    for p in points:
        if p.error:
            log.warning("Sweep point failed", y0=p.y0, error=p.error)
    log.info(
        "Grounding sweep finished",
        points=len(points),
        grounded=sum(p.outcome == "Grounded" for p in points),
        flips=side_flips(points),
    )
    return list(points)


def side_flips(points: Sequence[SweepPoint]) -> List[Tuple[float, float]]:
    """Adjacent initial clearances, lowest first, across which the side changes."""
    grounded = sorted((p for p in points if p.side is not None), key=lambda p: p.y_s0)
    pairs = zip(grounded, grounded[1:])
    return [(a.y_s0, b.y_s0) for a, b in pairs if a.side is not b.side]


def write_trajectory_csv(result: SimResult, path: str) -> None:
    lines = [",".join(TRAJECTORY_COLUMNS)]
    rows = zip(result.times, result.states, result.y_bank, result.n_bank)
    for t, row, yb, nb in rows:
        lines.append(",".join(float_repr(v) for v in (t, *row, yb, nb)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary_json(
    result: SimResult, path: str, meta: Optional[Dict[str, Any]] = None
) -> None:
    write_json(path, {**result.summary(), "meta": meta or {}})


def write_sweep_csv(points: Sequence[SweepPoint], path: str) -> None:
    def cell(value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, Side):
            return value.value
        if isinstance(value, float):
            return float_repr(value)
        return str(value).replace(",", ";").replace("\n", " ")

    lines = [",".join(SWEEP_COLUMNS)]
    for p in points:
        lines.append(",".join(cell(getattr(p, name)) for name in SWEEP_COLUMNS))
    atomic_write_text(path, "\n".join(lines) + "\n")

