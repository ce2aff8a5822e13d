"""One-at-a-time standard-deviation sweeps over a fitted logistic model."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics
from .classify import LogisticModel, sigmoid
from .dataset import ExperimentTable
from .errors import EmptyFilter, UnknownVariable

# sweepable raw variables and the table column each one reads
VARIABLES = {"D50": "d50", "WEV": "wev", "SLOPE": "slope", "RI": "ri"}
_ALIASES = {"PSIWEV": "WEV", "PSI_WEV": "WEV", "DELTA": "SLOPE", "D_50": "D50", "RAIN": "RI"}

DEFAULT_RANGE_SD = 2.0
DEFAULT_STEP = 0.05


def canonical_variable(name: str) -> str:
    key = name.strip().upper().replace("Ψ", "PSI")
    key = _ALIASES.get(key, key)
    if key not in VARIABLES:
        raise UnknownVariable(f"UnknownVariable: {name!r} (choose from {', '.join(VARIABLES)})")
    return key


@dataclass(frozen=True)
class SweepSample:
    position_sd: float
    raw_value: float
    probability: float
    clamped: bool


@dataclass(frozen=True)
class SensitivityCurve:
    variable: str
    context: str
    samples: tuple[SweepSample, ...]
    held_at_mean: tuple[str, ...]

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position_sd for s in self.samples])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.samples])

    def rise(self) -> float:
        """Probability at the upper end minus probability at the lower end."""
        return self.samples[-1].probability - self.samples[0].probability


def grid(range_sd: float, step: float) -> np.ndarray:
    """Positions ``i * step`` for ``|i * step| <= range_sd``; symmetric, contains 0."""
    if not step > 0 or not range_sd > 0:
        raise ValueError("range_sd and step must be > 0")
    ratio = range_sd / step
    half = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-9 else int(math.floor(ratio))
    return np.arange(-half, half + 1) * step


def _describe(filters: Mapping[str, str] | None) -> str:
    if not filters:
        return "all"
    return ";".join(f"{k}={v}" for k, v in filters.items())


def variable_stats(table: ExperimentTable) -> dict[str, tuple[float, float]]:
    return {v: numerics.mean_std(table.column(col)) for v, col in VARIABLES.items()}


def sweep(
    model: LogisticModel,
    table: ExperimentTable,
    target_variable: str,
    range_sd: float = DEFAULT_RANGE_SD,
    step: float = DEFAULT_STEP,
    filters: Mapping[str, str] | None = None,
) -> SensitivityCurve:
    """Failure probability as one raw variable moves in SD units, others at their mean.

    Means and SDs come from the filtered rows. At each grid position all
    three rain-gated products are rebuilt from the raw values, standardized
    with the model's Standardizer and scored. Values pushed below zero are
    clamped to 0 and flagged.
    """
    target = canonical_variable(target_variable)
    subset = table.where(filters)
    if len(subset) < 2:
        raise EmptyFilter(f"EmptyFilter: filter {_describe(filters)!r} leaves {len(subset)} rows (need 2)")
    stats = variable_stats(subset)
    positions = grid(range_sd, step)
    base = {v: stats[v][0] for v in VARIABLES}
    mean_t, std_t = stats[target]

    samples = []
    for s in positions:
        raw = mean_t + s * std_t
        clamped = raw < 0
        if clamped:
            raw = 0.0
        vals = dict(base, **{target: raw})
        ri = vals["RI"]
        feats = np.array([vals["D50"] * ri, vals["WEV"] * ri, vals["SLOPE"] * ri])
        p = float(sigmoid(model.logit_standardized(model.standardizer.transform(feats))))
        samples.append(SweepSample(float(s), float(raw), p, bool(clamped)))
    held = tuple(v for v in VARIABLES if v != target)
    return SensitivityCurve(target, _describe(filters), tuple(samples), held)


def sweep_all(
    model: LogisticModel,
    table: ExperimentTable,
    range_sd: float = DEFAULT_RANGE_SD,
    step: float = DEFAULT_STEP,
    filters: Mapping[str, str] | None = None,
) -> list[SensitivityCurve]:
    return [sweep(model, table, v, range_sd, step, filters) for v in VARIABLES]


def curves_csv(curves: Sequence[SensitivityCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variable", "context", "position_sd", "raw_value", "probability", "clamped"])
    for c in curves:
        for s in c.samples:
            w.writerow([c.variable, c.context, repr(s.position_sd), repr(s.raw_value), repr(s.probability), int(s.clamped)])
    return buf.getvalue()
