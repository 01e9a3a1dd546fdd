"""Captive-test time series: CSV ingestion, the random train/validation split and
synthetic captive tests generated from known coefficients."""

from __future__ import annotations

import csv
import math
import string
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy.special import jv

from banksim.coefficients import CoefficientSet
from banksim.errors import DomainError, ParseError, SchemaError
from banksim.hydro_model import CanalGeometry, VesselGeometry, delta_array, regressors
from banksim.util import atomic_write_text, float_repr

COLUMNS: Tuple[str, ...] = (
    "t",
    "x",
    "y",
    "psi",
    "u",
    "v",
    "r",
    "udot",
    "vdot",
    "rdot",
    "z",
    "X",
    "Y",
    "N",
)
LABEL_COLUMN = "test"

# Bessel terms kept in the closed-form harmonic-yaw track; J_k(A) is far below
# double precision long before this for any admissible yaw amplitude.
BESSEL_TERMS = 40


@dataclass(frozen=True)
class CaptiveRecord:
    t: float
    x: float
    y: float
    psi: float
    u: float
    v: float
    r: float
    udot: float
    vdot: float
    rdot: float
    z: float
    X: float
    Y: float
    N: float


@dataclass(frozen=True)
class CaptiveDataset:
    records: Tuple[CaptiveRecord, ...]
    test_labels: Tuple[str, ...]
    vessel: VesselGeometry
    canal: CanalGeometry
    # False when the labels were inferred from time resets rather than read.
    explicit_labels: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "test_labels", tuple(self.test_labels))
        if not self.records:
            raise ValueError("A captive dataset needs at least one record")
        if len(self.records) != len(self.test_labels):
            raise ValueError("Every record needs exactly one test label")
        last_t: Dict[str, float] = {}
        half_width = self.canal.width_W / 2
        for i, (record, label) in enumerate(zip(self.records, self.test_labels)):
            for name in COLUMNS:
                if not math.isfinite(getattr(record, name)):
                    raise ValueError(f"record {i}: {name} is not finite")
            if abs(record.y) >= half_width:
                raise DomainError(
                    f"|y|={abs(record.y):.6g} m is outside the canal", index=i
                )
            if label in last_t and record.t <= last_t[label]:
                raise ValueError(
                    f"record {i}: time is not increasing within test {label!r}"
                )
            last_t[label] = record.t

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise SchemaError(name)
        return np.array([getattr(record, name) for record in self.records], dtype=float)

    def labels(self) -> List[str]:
        return list(dict.fromkeys(self.test_labels))


@dataclass(frozen=True)
class SplitDataset:
    train: np.ndarray
    validation: np.ndarray
    seed: int


@dataclass(frozen=True)
class HarmonicYaw:
    amplitude: float
    period: float
    y_offset: float = 0.0


@dataclass(frozen=True)
class HarmonicSway:
    amplitude: float
    period: float
    y_offset: float = 0.0


Scenario = Union[HarmonicYaw, HarmonicSway]


def _infer_labels(times: Sequence[float]) -> List[str]:
    # A new test starts whenever the clock resets.
    letters = string.ascii_uppercase
    labels: List[str] = []
    current = 0
    for i, t in enumerate(times):
        if i and t <= times[i - 1]:
            current += 1
        labels.append(letters[current] if current < len(letters) else f"T{current}")
    return labels


def load_csv(
    path: str, vessel: VesselGeometry, canal: CanalGeometry
) -> CaptiveDataset:
    """Read a captive-test CSV.

    The header is t,x,y,psi,u,v,r,udot,vdot,rdot,z,X,Y,N with an optional test column.
    """
    log = structlog.get_logger()
    records: List[CaptiveRecord] = []
    labels: List[str] = []
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(COLUMNS[0], source=path)
        for name in COLUMNS:
            if name not in header:
                raise SchemaError(name, source=path)
        positions = [header.index(name) for name in COLUMNS]
        label_pos = header.index(LABEL_COLUMN) if LABEL_COLUMN in header else None

        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            values = []
            for name, pos in zip(COLUMNS, positions):
                try:
                    value = float(row[pos])
                except ValueError:
                    raise ParseError(f"{name}={row[pos]!r} is not a number", line)
                if not math.isfinite(value):
                    raise ParseError(f"{name}={row[pos]!r} is not finite", line)
                values.append(value)
            records.append(CaptiveRecord(*values))
            if label_pos is not None:
                labels.append(row[label_pos].strip())

    if not records:
        raise ValueError(f"{path} contains no records")
    explicit = label_pos is not None
    if not explicit:
        labels = _infer_labels([record.t for record in records])
    dataset = CaptiveDataset(
        tuple(records), tuple(labels), vessel, canal, explicit_labels=explicit
    )
    log.info(
        "Loaded captive data",
        path=path,
        records=len(dataset),
        tests=dataset.labels(),
    )
    return dataset


def write_csv(dataset: CaptiveDataset, path: str) -> None:
    header = list(COLUMNS)
    if dataset.explicit_labels:
        header.append(LABEL_COLUMN)
    lines = [",".join(header)]
    for record, label in zip(dataset.records, dataset.test_labels):
        cells = [float_repr(getattr(record, name)) for name in COLUMNS]
        if dataset.explicit_labels:
            cells.append(label)
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def split(
    dataset: CaptiveDataset,
    fraction: float = 0.8,
    seed: int = 0,
    per_test: bool = False,
) -> SplitDataset:
    """Random train/validation partition, deterministic in the seed.

    Temporal order plays no part. With ``per_test`` the fraction is applied
    within each test label instead of over the pooled records.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    if per_test:
        labels = np.array(dataset.test_labels)
        groups = [np.flatnonzero(labels == label) for label in dataset.labels()]
    else:
        groups = [np.arange(len(dataset))]

    train: List[np.ndarray] = []
    validation: List[np.ndarray] = []
    for group in groups:
        shuffled = group[rng.permutation(len(group))]
        # round half up, so ties go to the training side
        n_train = int(math.floor(fraction * len(group) + 0.5))
        train.append(shuffled[:n_train])
        validation.append(shuffled[n_train:])
    return SplitDataset(
        train=np.sort(np.concatenate(train)),
        validation=np.sort(np.concatenate(validation)),
        seed=seed,
    )


def _yaw_track(
    scenario: HarmonicYaw, u0: float, t: np.ndarray
) -> Dict[str, np.ndarray]:
    omega = 2 * math.pi / scenario.period
    amp = scenario.amplitude
    phase = omega * t
    # cos(A sin p) = J0(A) + 2 sum J_2k(A) cos(2kp)
    # sin(A sin p) = 2 sum J_2k+1(A) sin((2k+1)p)
    x = u0 * jv(0, amp) * t
    y = np.full_like(t, scenario.y_offset)
    for k in range(1, BESSEL_TERMS + 1):
        n_even = 2 * k
        n_odd = 2 * k - 1
        x = x + 2 * u0 * jv(n_even, amp) * np.sin(n_even * phase) / (n_even * omega)
        y = y - 2 * u0 * jv(n_odd, amp) * np.cos(n_odd * phase) / (n_odd * omega)
    zeros = np.zeros_like(t)
    return {
        "x": x,
        "y": y,
        "psi": amp * np.sin(phase),
        "v": zeros,
        "r": amp * omega * np.cos(phase),
        "vdot": zeros,
        "rdot": -amp * omega**2 * np.sin(phase),
    }


def _sway_track(
    scenario: HarmonicSway, u0: float, t: np.ndarray
) -> Dict[str, np.ndarray]:
    omega = 2 * math.pi / scenario.period
    amp = scenario.amplitude
    phase = omega * t
    zeros = np.zeros_like(t)
    return {
        "x": u0 * t,
        "y": scenario.y_offset + amp * np.sin(phase),
        "psi": zeros,
        "v": amp * omega * np.cos(phase),
        "r": zeros,
        "vdot": -amp * omega**2 * np.sin(phase),
        "rdot": zeros,
    }


def synthesize(
    vessel: VesselGeometry,
    canal: CanalGeometry,
    truth: CoefficientSet,
    scenario: Scenario,
    u0: float,
    duration: float,
    dt: float,
    noise_std: Tuple[float, float, float] = (0.0, 0.0, 0.0),
    seed: Optional[int] = None,
    label: str = "A",
    current: float = 0.0,
) -> CaptiveDataset:
    """A captive test with prescribed kinematics and model-generated forces.

    Harmonic yaw runs at zero drift (v = 0) so the track follows from integrating
    the heading; harmonic sway keeps the heading at zero. Forces are the model's
    expected readings for ``truth`` plus zero-mean Gaussian noise.
    """
    log = structlog.get_logger()
    if dt <= 0 or duration < dt:
        raise ValueError(f"need 0 < dt <= duration, got dt={dt}, duration={duration}")
    if scenario.period <= 0:
        raise ValueError(f"period must be positive, got {scenario.period}")
    if any(s < 0 for s in noise_std):
        raise ValueError("noise standard deviations must be non-negative")
    n = int(round(duration / dt))
    t = np.arange(n) * dt

    if isinstance(scenario, HarmonicYaw):
        if not abs(scenario.amplitude) < math.pi / 2:
            raise DomainError("yaw amplitude must stay below pi/2")
        track = _yaw_track(scenario, u0, t)
    else:
        track = _sway_track(scenario, u0, t)

    u = np.full_like(t, u0)
    udot = np.zeros_like(t)
    z = np.zeros_like(t)
    # Raises DomainError with the first record that leaves the validity domain.
    delta_array(track["y"], track["psi"], vessel, canal)
    theta_x, theta_y, theta_n = regressors(
        udot,
        track["vdot"],
        track["rdot"],
        u,
        track["v"],
        track["r"],
        track["y"],
        track["psi"],
        z,
        vessel,
        canal,
        current,
    )
    forces = [theta_x @ truth.a, theta_y @ truth.b, theta_n @ truth.c]
    if any(noise_std):
        rng = np.random.default_rng(seed)
        forces = [
            f + rng.normal(0.0, sigma, size=n) if sigma else f
            for f, sigma in zip(forces, noise_std)
        ]

    columns = {
        "t": t,
        "x": track["x"],
        "y": track["y"],
        "psi": track["psi"],
        "u": u,
        "v": track["v"],
        "r": track["r"],
        "udot": udot,
        "vdot": track["vdot"],
        "rdot": track["rdot"],
        "z": z,
        "X": forces[0],
        "Y": forces[1],
        "N": forces[2],
    }
    records = tuple(
        CaptiveRecord(**{name: float(columns[name][i]) for name in COLUMNS})
        for i in range(n)
    )
    log.info(
        "Synthesized captive test",
        scenario=type(scenario).__name__,
        label=label,
        records=n,
        u0=u0,
        noise_std=noise_std,
        seed=seed,
    )
    return CaptiveDataset(records, (label,) * n, vessel, canal)


def concat(datasets: Iterable[CaptiveDataset]) -> CaptiveDataset:
    """Join tests into one dataset; all parts must share the vessel and canal."""
    parts = list(datasets)
    if not parts:
        raise ValueError("nothing to concatenate")
    first = parts[0]
    for part in parts[1:]:
        if part.vessel != first.vessel or part.canal != first.canal:
            raise ValueError("datasets describe different vessels or canals")
    records: List[CaptiveRecord] = []
    labels: List[str] = []
    for part in parts:
        records.extend(part.records)
        labels.extend(part.test_labels)
    return CaptiveDataset(tuple(records), tuple(labels), first.vessel, first.canal)
