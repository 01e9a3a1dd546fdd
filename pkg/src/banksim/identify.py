"""Physics-constrained least squares identification of the banking model.

The three blocks are fitted jointly under

    minimise (|X - Theta_X a|^2 + |Y - Theta_Y b|^2 + |N - Theta_N c|^2) / M
    s.t.     b_rdot = c_vdot,  selected coefficients >= 0.

The equality is removed by giving b_rdot and c_vdot a single unknown, which
couples the Y and N blocks into one stacked system; X stays on its own. Sign
bounds go to scipy's bounded-variable least squares, which only bounds the
flagged coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize
import structlog

from banksim.coefficients import (
    A_NAMES,
    B_NAMES,
    BLOCK_NAMES,
    C_NAMES,
    CoefficientSet,
    added_mass_matrix,
    nonnegative_mask,
)
from banksim.dataset import CaptiveDataset, SplitDataset
from banksim.errors import DomainError, RankWarning
from banksim.hydro_model import CanalGeometry, VesselGeometry, regressors
from banksim.util import atomic_write_text, float_repr

UNKNOWNS = len(A_NAMES) + len(B_NAMES) + len(C_NAMES)

# Unknowns of the stacked sway/yaw system; "b_rdot" doubles as c_vdot.
SWAY_YAW_NAMES: Tuple[str, ...] = B_NAMES + C_NAMES[1:]


@dataclass(frozen=True)
class RegressionProblem:
    Theta_X: np.ndarray
    Theta_Y: np.ndarray
    Theta_N: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    N: np.ndarray
    column_names: Mapping[str, Tuple[str, ...]] = field(
        default_factory=lambda: dict(BLOCK_NAMES)
    )

    def __post_init__(self) -> None:
        m = self.X.shape[0]
        for name in ("Theta_X", "Theta_Y", "Theta_N", "X", "Y", "N"):
            arr = getattr(self, name)
            if arr.shape[0] != m:
                raise ValueError(f"{name} has {arr.shape[0]} rows, expected {m}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        for block, names in self.column_names.items():
            theta, _ = self.block(block)
            if theta.shape[1] != len(names):
                raise ValueError(
                    f"Theta_{block} has {theta.shape[1]} columns, "
                    f"names list {len(names)}"
                )

    @property
    def M(self) -> int:
        return int(self.X.shape[0])

    def block(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        if name == "X":
            return self.Theta_X, self.X
        if name == "Y":
            return self.Theta_Y, self.Y
        if name == "N":
            return self.Theta_N, self.N
        raise KeyError(f"Unknown block {name!r}, expected one of X, Y, N")

    def rows(self, index: Sequence[int]) -> RegressionProblem:
        idx = np.asarray(index, dtype=int)
        return RegressionProblem(
            Theta_X=self.Theta_X[idx],
            Theta_Y=self.Theta_Y[idx],
            Theta_N=self.Theta_N[idx],
            X=self.X[idx],
            Y=self.Y[idx],
            N=self.N[idx],
            column_names=self.column_names,
        )


@dataclass(frozen=True)
class BlockFit:
    x: np.ndarray
    active: Tuple[str, ...]
    pinned: Tuple[str, ...]
    iterations: int
    kkt_residual: float


@dataclass(frozen=True)
class BlockDiagnostics:
    columns: Tuple[str, ...]
    correlation: np.ndarray
    rank: int
    condition: float
    singular_values: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "columns": list(self.columns),
            "rank": self.rank,
            "condition": _json_float(self.condition),
            "singular_values": [float(s) for s in self.singular_values],
            "correlation": [[_json_float(c) for c in row] for row in self.correlation],
        }


def _json_float(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def build_matrices(
    dataset: CaptiveDataset,
    vessel: Optional[VesselGeometry] = None,
    canal: Optional[CanalGeometry] = None,
    current: float = 0.0,
) -> RegressionProblem:
    """Evaluate the candidate functions row-wise for every record."""
    vessel = vessel or dataset.vessel
    canal = canal or dataset.canal
    col = dataset.column
    try:
        theta_x, theta_y, theta_n = regressors(
            col("udot"),
            col("vdot"),
            col("rdot"),
            col("u"),
            col("v"),
            col("r"),
            col("y"),
            col("psi"),
            col("z"),
            vessel,
            canal,
            current,
        )
    except DomainError as e:
        structlog.get_logger().error(
            "Record outside the banking model domain", index=e.index
        )
        raise
    return RegressionProblem(theta_x, theta_y, theta_n, col("X"), col("Y"), col("N"))


def rank_tolerance(singular_values: np.ndarray, shape: Tuple[int, int]) -> float:
    if singular_values.size == 0:
        return 0.0
    return float(max(shape) * np.finfo(float).eps * singular_values[0])


def bounded_lstsq(
    A: np.ndarray,
    b: np.ndarray,
    nonneg: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Least squares with x[nonneg] >= 0 and the other coordinates free.

    Returns the solution, the mask of bounds held active at zero, and the
    number of solver iterations. ``A`` is expected to have full column rank.
    """
    nonneg = np.asarray(nonneg, dtype=bool)
    lower = np.where(nonneg, 0.0, -np.inf)
    result = scipy.optimize.lsq_linear(A, b, bounds=(lower, np.inf), method="bvls")
    held = (result.active_mask == -1) & nonneg
    x = np.where(held, 0.0, result.x)
    return x, held, int(result.nit)


def identifiable_columns(A: np.ndarray) -> np.ndarray:
    """Mask of a maximal well-determined column subset, chosen by pivoted QR."""
    n = A.shape[1]
    if n == 0:
        return np.zeros(0, dtype=bool)
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > rank_tolerance(s, A.shape)))
    keep = np.zeros(n, dtype=bool)
    if rank == n:
        keep[:] = True
        return keep
    _, _, pivots = scipy.linalg.qr(A, mode="economic", pivoting=True)
    keep[pivots[:rank]] = True
    return keep


def fit_columns(
    A: np.ndarray,
    b: np.ndarray,
    names: Sequence[str],
    nonneg: np.ndarray,
    warn: bool = True,
) -> BlockFit:
    """Bounded least squares with unidentifiable columns pinned to zero.

    All-zero columns are dropped first, so a fit with an extra zero column
    reproduces the fit without it exactly.
    """
    log = structlog.get_logger()
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    x = np.zeros(n)
    nonneg = np.asarray(nonneg, dtype=bool)

    nonzero = np.flatnonzero(np.any(A != 0, axis=0))
    kept = np.zeros(0, dtype=int)
    active_mask = np.zeros(n, dtype=bool)
    iterations = 0
    kkt = 0.0
    if nonzero.size:
        sub = A[:, nonzero]
        norms = np.linalg.norm(sub, axis=0)
        scaled = sub / norms
        keep_local = identifiable_columns(scaled)
        kept = nonzero[keep_local]
        design = scaled[:, keep_local]
        solution, held, iterations = bounded_lstsq(design, b, nonneg[kept])
        x[kept] = solution / norms[keep_local]
        active_mask[kept] = held
        gradient = design.T @ (b - design @ solution)
        violation = np.where(held, np.maximum(gradient, 0.0), np.abs(gradient))
        scale = max(float(np.linalg.norm(b)), np.finfo(float).tiny)
        kkt = float(np.max(violation, initial=0.0)) / scale

    pinned_mask = np.ones(n, dtype=bool)
    pinned_mask[kept] = False
    pinned = tuple(name for name, p in zip(names, pinned_mask) if p)
    active = tuple(name for name, a in zip(names, active_mask) if a)
    if pinned and warn:
        for name in pinned:
            log.warning(f"{name} unidentifiable, pinned to 0", column=name)
        warnings.warn(
            RankWarning(
                f"rank-deficient regression, pinned to 0: {', '.join(pinned)}", pinned
            ),
            stacklevel=2,
        )
    return BlockFit(
        x=x, active=active, pinned=pinned, iterations=iterations, kkt_residual=kkt
    )


def _stack_sway_yaw(problem: RegressionProblem) -> Tuple[np.ndarray, np.ndarray]:
    m = problem.M
    zeros = np.zeros((m, 1))
    top = np.hstack([problem.Theta_Y, np.zeros((m, len(C_NAMES) - 1))])
    bottom = np.hstack(
        [
            zeros,
            problem.Theta_N[:, :1],
            np.zeros((m, len(B_NAMES) - 2)),
            problem.Theta_N[:, 1:],
        ]
    )
    return np.vstack([top, bottom]), np.concatenate([problem.Y, problem.N])


def _expand_shared(names: Sequence[str]) -> Tuple[str, ...]:
    out = []
    for name in names:
        out.append(name)
        if name == "b_rdot":
            out.append("c_vdot")
    return tuple(out)


def solve(problem: RegressionProblem, warn: bool = True) -> CoefficientSet:
    log = structlog.get_logger()
    if problem.M < UNKNOWNS:
        raise ValueError(
            f"need at least {UNKNOWNS} rows to identify {UNKNOWNS} coefficients, "
            f"got {problem.M}"
        )

    fit_x = fit_columns(
        problem.Theta_X, problem.X, A_NAMES, nonnegative_mask(A_NAMES), warn=warn
    )
    stacked, target = _stack_sway_yaw(problem)
    fit_yn = fit_columns(
        stacked, target, SWAY_YAW_NAMES, nonnegative_mask(SWAY_YAW_NAMES), warn=warn
    )

    shared = fit_yn.x[1]
    b = fit_yn.x[: len(B_NAMES)]
    c = np.concatenate([[shared], fit_yn.x[len(B_NAMES) :]])
    coeffs = CoefficientSet(
        a=fit_x.x,
        b=b,
        c=c,
        active=fit_x.active + _expand_shared(fit_yn.active),
        pinned=fit_x.pinned + _expand_shared(fit_yn.pinned),
        diagnostics={
            "kkt_residual": {"X": fit_x.kkt_residual, "YN": fit_yn.kkt_residual},
            "iterations": {"X": fit_x.iterations, "YN": fit_yn.iterations},
        },
    )
    log.info(
        "Solved constrained least squares",
        rows=problem.M,
        active=list(coeffs.active),
        pinned=list(coeffs.pinned),
        objective=objective(problem, coeffs),
    )
    return coeffs


def _correlation(theta: np.ndarray) -> np.ndarray:
    centered = theta - theta.mean(axis=0)
    norms = np.linalg.norm(centered, axis=0)
    constant = norms == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (centered.T @ centered) / np.outer(norms, norms)
    corr[constant, :] = np.nan
    corr[:, constant] = np.nan
    corr[np.diag_indices_from(corr)] = np.where(constant, np.nan, 1.0)
    return np.clip(corr, -1.0, 1.0)


def block_diagnostics(theta: np.ndarray, names: Sequence[str]) -> BlockDiagnostics:
    if theta.shape[0] < 2:
        raise ValueError("correlation diagnostics need at least two rows")
    s = np.linalg.svd(theta, compute_uv=False)
    tol = rank_tolerance(s, theta.shape)
    nonzero = s[s > tol]
    condition = float(nonzero[0] / nonzero[-1]) if nonzero.size else float("nan")
    return BlockDiagnostics(
        columns=tuple(names),
        correlation=_correlation(theta),
        rank=int(nonzero.size),
        condition=condition,
        singular_values=s,
    )


def diagnostics(problem: RegressionProblem) -> Dict[str, BlockDiagnostics]:
    """Column correlations, numerical rank and condition number of each block."""
    return {
        name: block_diagnostics(problem.block(name)[0], problem.column_names[name])
        for name in ("X", "Y", "N")
    }


def predict(
    problem: RegressionProblem, coeffs: CoefficientSet
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        problem.Theta_X @ coeffs.a,
        problem.Theta_Y @ coeffs.b,
        problem.Theta_N @ coeffs.c,
    )


PREDICTION_COLUMNS = ("t", "X", "X_hat", "Y", "Y_hat", "Y_bank", "N", "N_hat", "N_bank")


def write_predictions_csv(
    dataset: CaptiveDataset, coeffs: CoefficientSet, path: str, current: float = 0.0
) -> None:
    """Measured against fitted forces per record, bank share of Y and N split out."""
    problem = build_matrices(dataset, current=current)
    x_hat, y_hat, n_hat = predict(problem, coeffs)
    y_bank = problem.Theta_Y[:, -1] * coeffs.value("b_bank")
    n_bank = problem.Theta_N[:, -1] * coeffs.value("c_bank")
    columns = (
        dataset.column("t"),
        problem.X,
        x_hat,
        problem.Y,
        y_hat,
        y_bank,
        problem.N,
        n_hat,
        n_bank,
    )
    lines = [",".join(PREDICTION_COLUMNS)]
    lines.extend(",".join(float_repr(float(v)) for v in row) for row in zip(*columns))
    atomic_write_text(path, "\n".join(lines) + "\n")


def validate(
    problem: RegressionProblem, coeffs: CoefficientSet
) -> Tuple[float, float, float]:
    """Mean squared residual of each block on the given rows."""
    x_hat, y_hat, n_hat = predict(problem, coeffs)
    return (
        float(np.mean((problem.X - x_hat) ** 2)),
        float(np.mean((problem.Y - y_hat) ** 2)),
        float(np.mean((problem.N - n_hat) ** 2)),
    )


def objective(problem: RegressionProblem, coeffs: CoefficientSet) -> float:
    return float(sum(validate(problem, coeffs)))


def added_mass_is_positive_definite(coeffs: CoefficientSet) -> bool:
    matrix = added_mass_matrix(coeffs)
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    ok = bool(np.all(eigenvalues > 0))
    if not ok:
        structlog.get_logger().warning(
            "Identified sway/yaw inertia is not positive definite",
            eigenvalues=[float(e) for e in eigenvalues],
        )
    return ok


def identify(
    dataset: CaptiveDataset,
    split: SplitDataset,
    current: float = 0.0,
    warn: bool = True,
) -> CoefficientSet:
    """Fit on the training rows, score on both partitions and attach diagnostics."""
    log = structlog.get_logger()
    problem = build_matrices(dataset, current=current)
    train = problem.rows(split.train)
    validation = problem.rows(split.validation)
    coeffs = solve(train, warn=warn)
    added_mass_is_positive_definite(coeffs)

    diag: Dict[str, Any] = dict(coeffs.diagnostics)
    diag["blocks"] = {name: d.to_dict() for name, d in diagnostics(train).items()}
    diag["train_mse"] = dict(zip("XYN", validate(train, coeffs)))
    if validation.M:
        diag["validation_mse"] = dict(zip("XYN", validate(validation, coeffs)))
    log.info(
        "Identified coefficients",
        train_rows=train.M,
        validation_rows=validation.M,
        train_mse=diag["train_mse"],
        validation_mse=diag.get("validation_mse"),
    )
    return CoefficientSet(
        a=coeffs.a,
        b=coeffs.b,
        c=coeffs.c,
        diagnostics=diag,
        active=coeffs.active,
        pinned=coeffs.pinned,
        meta={
            "split_seed": split.seed,
            "train_rows": train.M,
            "validation_rows": validation.M,
        },
    )
