"""Exact Shapley attribution of regressor columns to validation fit.

A coalition S of columns is worth the validation MSE of the zero predictor
minus the validation MSE of a constrained refit that only uses S on the
training rows. Every coalition is enumerated, so blocks are limited to
MAX_COLUMNS columns.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import cachetools
import cachetools.keys
import numpy as np
import structlog
from joblib import Parallel, delayed

from banksim.coefficients import nonnegative_mask
from banksim.dataset import SplitDataset
from banksim.identify import RegressionProblem, fit_columns

MAX_COLUMNS = 20

Coalition = Tuple[int, ...]


@dataclass(frozen=True)
class ShapleyEntry:
    column: str
    raw: float
    normalised: float


@dataclass(frozen=True)
class BlockShapley:
    block: str
    entries: Tuple[ShapleyEntry, ...]
    # v(S) for every coalition, keyed by the column names in S
    coalition_values: Mapping[Tuple[str, ...], float]

    def raw(self) -> np.ndarray:
        return np.array([e.raw for e in self.entries])

    def normalised(self) -> np.ndarray:
        return np.array([e.normalised for e in self.entries])

    def entry(self, column: str) -> ShapleyEntry:
        for e in self.entries:
            if e.column == column:
                return e
        raise KeyError(column)


@dataclass(frozen=True)
class ShapleyReport:
    blocks: Mapping[str, BlockShapley]

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for name, block in self.blocks.items():
            out[name] = {
                "columns": [
                    {"column": e.column, "raw": e.raw, "normalised": e.normalised}
                    for e in block.entries
                ],
                "coalition_values": {
                    ",".join(k): v for k, v in block.coalition_values.items()
                },
            }
        return out

    def to_json(self, meta: Optional[Mapping[str, Any]] = None) -> str:
        doc = {"blocks": self.to_dict(), "meta": dict(meta or {})}
        return json.dumps(doc, indent=2)


def coalition_value(
    coalition: Sequence[int],
    train_theta: np.ndarray,
    train_target: np.ndarray,
    val_theta: np.ndarray,
    val_target: np.ndarray,
    nonneg: np.ndarray,
) -> float:
    baseline = float(np.mean(val_target**2))
    cols = np.asarray(coalition, dtype=int)
    if cols.size == 0:
        return 0.0
    train_sub = train_theta[:, cols]
    labels = [str(c) for c in cols]
    fit = fit_columns(train_sub, train_target, labels, nonneg[cols], warn=False)
    # Columns that vanish on the training rows carry no coefficient; leaving
    # them out of the product keeps dummy columns exactly neutral.
    used = np.any(train_sub != 0, axis=0)
    prediction = val_theta[:, cols[used]] @ fit.x[used]
    return baseline - float(np.mean((val_target - prediction) ** 2))


class CoalitionGame:
    """Memoised value function of one block's regression game."""

    def __init__(
        self,
        train_theta: np.ndarray,
        train_target: np.ndarray,
        val_theta: np.ndarray,
        val_target: np.ndarray,
        names: Sequence[str],
        nonneg: Optional[np.ndarray] = None,
    ) -> None:
        self.names = tuple(names)
        n = len(self.names)
        if train_theta.shape[1] != n or val_theta.shape[1] != n:
            raise ValueError(f"expected {n} columns to match the names given")
        if n > MAX_COLUMNS:
            raise ValueError(
                f"exact enumeration is limited to {MAX_COLUMNS} columns, got {n}"
            )
        if val_theta.shape[0] == 0:
            raise ValueError("Shapley values need at least one validation row")
        self.train_theta = np.asarray(train_theta, dtype=float)
        self.train_target = np.asarray(train_target, dtype=float)
        self.val_theta = np.asarray(val_theta, dtype=float)
        self.val_target = np.asarray(val_target, dtype=float)
        if nonneg is None:
            self.nonneg = nonnegative_mask(self.names)
        else:
            self.nonneg = np.asarray(nonneg, dtype=bool)
        self.cache = cachetools.LRUCache(maxsize=2**n)  # type: ignore
        self.log = structlog.get_logger()

    @property
    def n(self) -> int:
        return len(self.names)

    def _arrays(self) -> Tuple[np.ndarray, ...]:
        return (
            self.train_theta,
            self.train_target,
            self.val_theta,
            self.val_target,
            self.nonneg,
        )

    def _evaluate(self, coalition: Coalition) -> float:
        return coalition_value(coalition, *self._arrays())

    def value(self, coalition: Coalition) -> float:
        key = cachetools.keys.hashkey(tuple(sorted(coalition)))
        cached = self.cache.get(key)
        if cached is None:
            cached = self._evaluate(tuple(sorted(coalition)))
            self.cache[key] = cached
        return cached

    def evaluate_all(self, jobs: int = 1) -> Dict[Coalition, float]:
        coalitions = [
            subset
            for size in range(self.n + 1)
            for subset in itertools.combinations(range(self.n), size)
        ]
        missing = [
            c for c in coalitions if cachetools.keys.hashkey(c) not in self.cache
        ]
        if missing and jobs != 1:
            arrays = self._arrays()
            with Parallel(n_jobs=jobs) as parallel:
                values = parallel(delayed(coalition_value)(c, *arrays) for c in missing)
            for c, v in zip(missing, values):
                self.cache[cachetools.keys.hashkey(c)] = float(v)
        return {c: self.value(c) for c in coalitions}


def _weights(n: int) -> List[float]:
    return [
        math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
        for s in range(n)
    ]


def exact_shapley(
    game: CoalitionGame, jobs: int = 1
) -> Tuple[np.ndarray, Dict[Coalition, float]]:
    values = game.evaluate_all(jobs=jobs)
    n = game.n
    weights = _weights(n)
    phi = np.zeros(n)
    for j in range(n):
        others = [k for k in range(n) if k != j]
        for size in range(n):
            for subset in itertools.combinations(others, size):
                with_j = tuple(sorted(subset + (j,)))
                phi[j] += weights[size] * (values[with_j] - values[subset])
    return phi, values


def normalise(phi: np.ndarray) -> np.ndarray:
    total = float(np.sum(np.abs(phi)))
    if total == 0:
        return np.zeros_like(phi)
    return phi / total


def block_shapley(
    block: str,
    train_theta: np.ndarray,
    train_target: np.ndarray,
    val_theta: np.ndarray,
    val_target: np.ndarray,
    names: Sequence[str],
    nonneg: Optional[np.ndarray] = None,
    jobs: int = 1,
) -> BlockShapley:
    game = CoalitionGame(
        train_theta, train_target, val_theta, val_target, names, nonneg
    )
    phi, values = exact_shapley(game, jobs=jobs)
    normalised = normalise(phi)
    entries = tuple(
        ShapleyEntry(column=name, raw=float(p), normalised=float(q))
        for name, p, q in zip(game.names, phi, normalised)
    )
    coalition_values = {tuple(game.names[i] for i in c): v for c, v in values.items()}
    structlog.get_logger().info(
        "Computed Shapley values",
        block=block,
        coalitions=len(values),
        normalised={e.column: round(e.normalised, 4) for e in entries},
    )
    return BlockShapley(block=block, entries=entries, coalition_values=coalition_values)


def shapley_values(
    problem: RegressionProblem,
    split: SplitDataset,
    blocks: Sequence[str] = ("X", "Y", "N"),
    jobs: int = 1,
) -> ShapleyReport:
    """Exact Shapley values for each requested block.

    Blocks are treated independently, so the shared b_rdot/c_vdot unknown is
    not tied during the coalition refits.
    """
    train = problem.rows(split.train)
    validation = problem.rows(split.validation)
    out: Dict[str, BlockShapley] = {}
    for name in blocks:
        train_theta, train_target = train.block(name)
        val_theta, val_target = validation.block(name)
        out[name] = block_shapley(
            name,
            train_theta,
            train_target,
            val_theta,
            val_target,
            problem.column_names[name],
            jobs=jobs,
        )
    return ShapleyReport(blocks=out)


def format_table(report: ShapleyReport) -> str:
    lines: List[str] = []
    for name, block in report.blocks.items():
        width = max(len("column"), *(len(e.column) for e in block.entries))
        lines.append(f"Block {name}")
        lines.append(f"{'column':<{width}}  {'raw':>14}  {'normalised':>10}")
        for e in block.entries:
            lines.append(f"{e.column:<{width}}  {e.raw:>14.6e}  {e.normalised:>10.3f}")
        lines.append("")
    return "\n".join(lines)
