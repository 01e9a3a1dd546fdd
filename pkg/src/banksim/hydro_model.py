"""Closed-form banking model for a vessel in a rectangular canal.

Sign conventions: y is the transverse offset from the canal centreline, positive
toward the starboard bank; psi is the heading relative to the canal axis. A
positive blockage function delta means the vessel is nearer the starboard bank.

The force columns here follow the measured-force convention of a captive test:
acceleration and damping columns carry a leading minus, the sway banking column
is positive and the yaw banking column is negated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Protocol, Tuple, Union

import numpy as np

from banksim.coefficients import CoefficientSet
from banksim.errors import DomainError

ArrayLike = Union[float, np.ndarray]

# Beyond this heading the equivalent aligned canal is treated as infinitely
# wide and the banking terms vanish.
PSI_LIMIT = math.pi / 2 - 1e-6


@dataclass(frozen=True)
class VesselGeometry:
    length_L: float
    beam_B: float
    draft_T0: float
    block_coeff_CB: float
    mass_m: float
    inertia_Iz: float
    ref_offset_xG: float = 0.0

    def __post_init__(self) -> None:
        for name in ("length_L", "beam_B", "draft_T0", "mass_m", "inertia_Iz"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if not (0 < self.block_coeff_CB <= 1):
            raise ValueError(
                f"block_coeff_CB must be in (0, 1], got {self.block_coeff_CB}"
            )
        if not math.isfinite(self.ref_offset_xG):
            raise ValueError("ref_offset_xG must be finite")


@dataclass(frozen=True)
class CanalGeometry:
    width_W: float
    # Carried for completeness; nothing in the closed-form model uses it.
    depth_D: float = 1.0
    water_density_rho: float = 1000.0

    def __post_init__(self) -> None:
        for name in ("width_W", "depth_D", "water_density_rho"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")

    def check_fits(self, vessel: VesselGeometry) -> None:
        if self.width_W <= vessel.beam_B:
            raise ValueError(
                f"Canal width {self.width_W} m does not exceed "
                f"the vessel beam {vessel.beam_B} m"
            )


@dataclass(frozen=True)
class PlanarState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    u: float = 0.0
    v: float = 0.0
    r: float = 0.0
    z: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.psi):
            raise ValueError("psi must be finite")


@dataclass(frozen=True)
class BankForce:
    Y_bank: float
    N_bank: float


class KinematicRecord(Protocol):
    """Anything carrying a planar state and the body accelerations."""

    y: float
    psi: float
    u: float
    v: float
    r: float
    z: float
    udot: float
    vdot: float
    rdot: float


def water_speed(u: ArrayLike, current: float = 0.0) -> ArrayLike:
    """Water speed past the hull: surge speed plus any ambient current."""
    return u + current


def _equivalent_half_widths(
    y: ArrayLike, psi: ArrayLike, canal: CanalGeometry
) -> Tuple[np.ndarray, np.ndarray]:
    sec = 1.0 / np.cos(np.abs(psi))
    half = canal.width_W / 2
    return (half - y) * sec, (half + y) * sec


def clearances(
    state: PlanarState, vessel: VesselGeometry, canal: CanalGeometry
) -> Tuple[float, float]:
    """Starboard and port midship hull clearances in the equivalent aligned canal."""
    if abs(state.psi) >= math.pi / 2:
        raise DomainError(
            f"heading {state.psi:.6g} rad leaves no equivalent aligned canal"
        )
    starboard, port = _equivalent_half_widths(state.y, state.psi, canal)
    y_s = float(starboard - vessel.beam_B / 2)
    y_p = float(port - vessel.beam_B / 2)
    if y_s <= 0 or y_p <= 0:
        raise DomainError(
            f"hull touches the bank at y={state.y:.6g} m "
            f"(y_s={y_s:.6g}, y_p={y_p:.6g})"
        )
    return y_s, y_p


def delta_array(
    y: ArrayLike, psi: ArrayLike, vessel: VesselGeometry, canal: CanalGeometry
) -> np.ndarray:
    """Vectorised blockage function.

    Raises DomainError carrying the first offending index.
    """
    y_arr = np.asarray(y, dtype=float)
    psi_arr = np.broadcast_to(np.asarray(psi, dtype=float), y_arr.shape)
    aligned = np.abs(psi_arr) < PSI_LIMIT
    # Transverse rows get a harmless heading so the division below stays finite.
    psi_safe = np.where(aligned, psi_arr, 0.0)
    starboard, port = _equivalent_half_widths(y_arr, psi_safe, canal)
    half_beam = vessel.beam_B / 2
    y_s = starboard - half_beam
    y_p = port - half_beam
    bad = aligned & ((y_s <= 0) | (y_p <= 0))
    if np.any(bad):
        index = int(np.flatnonzero(bad.ravel())[0]) if y_arr.ndim else None
        y_bad = float(y_arr.ravel()[index]) if index is not None else float(y_arr)
        raise DomainError(f"hull touches the bank at y={y_bad:.6g} m", index=index)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = starboard**2 / y_s**2 - port**2 / y_p**2
    return np.where(aligned, value, 0.0)


def delta(state: PlanarState, vessel: VesselGeometry, canal: CanalGeometry) -> float:
    """Dimensionless port/starboard pressure asymmetry, odd in y.

    Zero at transverse headings.
    """
    if abs(state.psi) >= PSI_LIMIT:
        return 0.0
    clearances(state, vessel, canal)
    return float(delta_array(state.y, state.psi, vessel, canal))


def bank_columns(
    y: ArrayLike,
    psi: ArrayLike,
    z: ArrayLike,
    u_w: ArrayLike,
    vessel: VesselGeometry,
    canal: CanalGeometry,
) -> Tuple[np.ndarray, np.ndarray]:
    """Banking regressors: the sway column and the (negated) yaw column."""
    draft = vessel.draft_T0 + np.asarray(z, dtype=float)
    if np.any(draft <= 0):
        raise ValueError("sinkage z leaves a non-positive draft T0 + z")
    d = delta_array(y, psi, vessel, canal)
    rho = canal.water_density_rho
    pressure = 0.5 * vessel.block_coeff_CB * rho * d * np.square(u_w)
    sway = pressure * vessel.length_L * draft
    yaw = -pressure * vessel.length_L**2 * draft
    return sway, yaw


def bank_force(
    state: PlanarState,
    u_w: float,
    b_bank: float,
    c_bank: float,
    vessel: VesselGeometry,
    canal: CanalGeometry,
) -> BankForce:
    if u_w < 0:
        raise ValueError(f"water speed must be non-negative, got {u_w}")
    if state.z + vessel.draft_T0 <= 0:
        raise ValueError("sinkage z leaves a non-positive draft T0 + z")
    if abs(state.psi) < PSI_LIMIT:
        clearances(state, vessel, canal)
    sway, yaw = bank_columns(state.y, state.psi, state.z, u_w, vessel, canal)
    return BankForce(Y_bank=float(b_bank * sway), N_bank=float(c_bank * yaw))


def regressors(
    udot: ArrayLike,
    vdot: ArrayLike,
    rdot: ArrayLike,
    u: ArrayLike,
    v: ArrayLike,
    r: ArrayLike,
    y: ArrayLike,
    psi: ArrayLike,
    z: ArrayLike,
    vessel: VesselGeometry,
    canal: CanalGeometry,
    current: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Candidate regression rows (Theta_X, Theta_Y, Theta_N) for a batch of records."""
    udot, vdot, rdot, u, v, r = (
        np.atleast_1d(np.asarray(a, dtype=float)) for a in (udot, vdot, rdot, u, v, r)
    )
    y, psi, z = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (y, psi, z))
    sway, yaw = bank_columns(y, psi, z, water_speed(u, current), vessel, canal)
    theta_x = np.column_stack([-udot, -u, -np.abs(u) * u])
    shared = [-vdot, -rdot, -v, -r, -np.abs(v) * v, -np.abs(r) * r]
    theta_y = np.column_stack(shared + [sway])
    theta_n = np.column_stack(shared + [yaw])
    return theta_x, theta_y, theta_n


def predict_measured_forces(
    record: KinematicRecord,
    coeffs: CoefficientSet,
    vessel: VesselGeometry,
    canal: CanalGeometry,
    current: float = 0.0,
) -> Tuple[float, float, float]:
    """Expected sensor readings (X, Y, N) for one record, as Theta @ coeffs."""
    theta_x, theta_y, theta_n = regressors(
        record.udot,
        record.vdot,
        record.rdot,
        record.u,
        record.v,
        record.r,
        record.y,
        record.psi,
        record.z,
        vessel,
        canal,
        current,
    )
    return (
        float(theta_x[0] @ coeffs.a),
        float(theta_y[0] @ coeffs.b),
        float(theta_n[0] @ coeffs.c),
    )


def hull_corners(state: PlanarState, vessel: VesselGeometry) -> np.ndarray:
    """Corners of the L x B hull rectangle in canal coordinates, shape (4, 2)."""
    half_l = vessel.length_L / 2
    half_b = vessel.beam_B / 2
    body = np.array(
        [[half_l, half_b], [half_l, -half_b], [-half_l, half_b], [-half_l, -half_b]]
    )
    c, s = math.cos(state.psi), math.sin(state.psi)
    rotation = np.array([[c, -s], [s, c]])
    return body @ rotation.T + np.array([state.x, state.y])


def froude_scale(
    vessel: VesselGeometry, canal: CanalGeometry, state: PlanarState, lam: float
) -> Tuple[VesselGeometry, CanalGeometry, PlanarState]:
    """Geometrically similar vessel, canal and state at scale factor lam."""
    if not lam > 0:
        raise ValueError(f"scale factor must be positive, got {lam}")
    root = math.sqrt(lam)
    scaled_vessel = replace(
        vessel,
        length_L=vessel.length_L * lam,
        beam_B=vessel.beam_B * lam,
        draft_T0=vessel.draft_T0 * lam,
        mass_m=vessel.mass_m * lam**3,
        inertia_Iz=vessel.inertia_Iz * lam**5,
        ref_offset_xG=vessel.ref_offset_xG * lam,
    )
    scaled_canal = replace(
        canal, width_W=canal.width_W * lam, depth_D=canal.depth_D * lam
    )
    scaled_state = PlanarState(
        x=state.x * lam,
        y=state.y * lam,
        psi=state.psi,
        u=state.u * root,
        v=state.v * root,
        r=state.r / root,
        z=state.z * lam,
    )
    return scaled_vessel, scaled_canal, scaled_state


# Length exponent of each coefficient's unit once time is expressed through
# Froude similarity (t ~ sqrt(lam)); mass carries lam**3.
_COEFFICIENT_EXPONENTS = {
    "a_udot": 3.0,
    "a_u": 2.5,
    "a_|u|u": 2.0,
    "b_vdot": 3.0,
    "b_rdot": 4.0,
    "b_v": 2.5,
    "b_r": 3.5,
    "b_|v|v": 2.0,
    "b_|r|r": 4.0,
    "b_bank": 0.0,
    "c_vdot": 4.0,
    "c_rdot": 5.0,
    "c_v": 3.5,
    "c_r": 4.5,
    "c_|v|v": 3.0,
    "c_|r|r": 5.0,
    "c_bank": 0.0,
}


def froude_scale_coefficients(coeffs: CoefficientSet, lam: float) -> CoefficientSet:
    """Coefficients of a geometrically similar vessel.

    The banking pair is dimensionless and kept.
    """
    if not lam > 0:
        raise ValueError(f"scale factor must be positive, got {lam}")
    scaled = {
        name: value * lam ** _COEFFICIENT_EXPONENTS[name]
        for name, value in coeffs.as_dict().items()
    }
    return CoefficientSet.from_dict(scaled, meta={**coeffs.meta, "froude_scale": lam})
