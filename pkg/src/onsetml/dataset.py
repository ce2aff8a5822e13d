"""Experiment tables: CSV ingestion, feature engineering, standardization,
partitioning and the synthetic Table-1 style generator."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import numerics
from .errors import (
    BadDesign,
    BadFoldCount,
    BadValue,
    ConstantColumn,
    DegenerateSplit,
    LayoutMismatch,
    MissingColumn,
    TooFewValues,
    UnknownColumn,
)


class Layout(str, Enum):
    H_TOP = "h_top"
    H_SUB = "h_sub"


class Soil(str, Enum):
    FINE = "fine"
    MEDIUM = "medium"
    COARSE = "coarse"


CSV_HEADER = (
    "layout,soil,d50_mm,d10_mm,cc,cu,contact_angle_deg,friction_angle_deg,wev_kpa,"
    "slope_deg,rain_mm_hr,td_l_m2,te_g_m2,e1,e2,e3,e4,e5,e6,d1,d2,d3,d4,d5,d6,failure"
).split(",")

# CSV column -> record attribute, for the scalar numeric columns
_SCALAR_COLUMNS = {
    "d50_mm": "d50",
    "d10_mm": "d10",
    "cc": "cc",
    "cu": "cu",
    "contact_angle_deg": "contact_angle",
    "friction_angle_deg": "friction_angle",
    "wev_kpa": "wev",
    "slope_deg": "slope",
    "rain_mm_hr": "rain_intensity",
}
_EROSION = [f"e{i}" for i in range(1, 7)]
_DISCHARGE = [f"d{i}" for i in range(1, 7)]

# analysis column names (the correlation matrix / PCA vocabulary)
NUMERIC_COLUMNS = (
    ["d50", "d10", "cc", "cu", "contact_angle", "friction_angle", "wev", "slope", "ri", "td", "te"]
    + _EROSION
    + _DISCHARGE
)
_ALIASES = {
    "d50_mm": "d50",
    "d10_mm": "d10",
    "contact_angle_deg": "contact_angle",
    "theta": "contact_angle",
    "friction_angle_deg": "friction_angle",
    "phi": "friction_angle",
    "wev_kpa": "wev",
    "psi_wev": "wev",
    "slope_deg": "slope",
    "delta": "slope",
    "rain_mm_hr": "ri",
    "rain_intensity": "ri",
    "td_l_m2": "td",
    "te_g_m2": "te",
}


def canonical_column(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in NUMERIC_COLUMNS and key not in ("failure", "layout", "soil"):
        raise UnknownColumn(f"UnknownColumn: {name!r}")
    return key


@dataclass(frozen=True)
class ExperimentRecord:
    layout: Layout
    soil: Soil
    d50: float
    d10: float
    cc: float
    cu: float
    contact_angle: float
    friction_angle: float
    wev: float
    slope: float
    rain_intensity: float
    td: float | None = None
    te: float | None = None
    erosion_intervals: tuple[float, ...] | None = None
    discharge_intervals: tuple[float, ...] | None = None
    failure: int | None = None

    def __post_init__(self):
        problems = validate_record(self)
        if problems:
            column, detail = problems[0]
            raise BadValue(0, column, detail)

    def value(self, name: str) -> float | None:
        key = canonical_column(name)
        if key == "ri":
            return self.rain_intensity
        if key in _EROSION:
            return None if self.erosion_intervals is None else self.erosion_intervals[int(key[1]) - 1]
        if key in _DISCHARGE:
            return None if self.discharge_intervals is None else self.discharge_intervals[int(key[1]) - 1]
        if key == "failure":
            return None if self.failure is None else float(self.failure)
        return getattr(self, key)


def validate_record(rec: ExperimentRecord) -> list[tuple[str, str]]:
    """Return ``(csv column, reason)`` for each violated record invariant."""
    out = []
    for col, attr in _SCALAR_COLUMNS.items():
        v = getattr(rec, attr)
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            out.append((col, "not a finite number"))
    if out:
        return out
    if not rec.d50 > 0:
        out.append(("d50_mm", "must be > 0"))
    if rec.rain_intensity < 0:
        out.append(("rain_mm_hr", "must be >= 0"))
    if not 0 < rec.slope < 90:
        out.append(("slope_deg", "must be in (0, 90)"))
    if rec.wev < 0:
        out.append(("wev_kpa", "must be >= 0"))
    for name, series in (("e1", rec.erosion_intervals), ("d1", rec.discharge_intervals)):
        if series is not None and len(series) != 6:
            out.append((name, "interval series needs exactly 6 values"))
    if rec.layout is Layout.H_TOP:
        for name, v in (("td_l_m2", rec.td), ("te_g_m2", rec.te), ("e1", rec.erosion_intervals), ("d1", rec.discharge_intervals)):
            if v is None:
                out.append((name, "required for h_top rows"))
    if rec.layout is Layout.H_SUB and rec.failure is None:
        out.append(("failure", "required for h_sub rows"))
    if rec.failure is not None and rec.failure not in (0, 1):
        out.append(("failure", "must be 0 or 1"))
    return out


class EngineeredFeatures(NamedTuple):
    """Rain-gated products: every feature vanishes when rain intensity is 0."""

    x1: float  # d50 * RI
    x2: float  # wev * RI
    x3: float  # slope * RI


FEATURE_NAMES = ("d50_ri", "wev_ri", "slope_ri")
RAW_VARIABLES = ("d50", "wev", "slope", "ri")


def engineer_features(record: ExperimentRecord) -> EngineeredFeatures:
    ri = record.rain_intensity
    return EngineeredFeatures(record.d50 * ri, record.wev * ri, record.slope * ri)


def engineer_matrix(raw) -> np.ndarray:
    """Vectorised products for an ``(n, 4)`` array of (d50, wev, slope, RI)."""
    raw = np.asarray(raw, dtype=float)
    ri = raw[:, 3:4]
    return raw[:, :3] * ri


@dataclass(frozen=True)
class ExperimentTable:
    records: tuple[ExperimentRecord, ...]
    provenance: str = ""

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        key = canonical_column(name)
        values = []
        for i, rec in enumerate(self.records, start=1):
            v = rec.value(key)
            if v is None:
                raise BadValue(i, key, "value absent")
            values.append(v)
        return np.asarray(values, dtype=float)

    def matrix(self, columns: Sequence[str]) -> np.ndarray:
        if not self.records:
            return np.zeros((0, len(columns)))
        return np.column_stack([self.column(c) for c in columns])

    def raw_features(self) -> np.ndarray:
        return self.matrix(RAW_VARIABLES)

    def features(self) -> np.ndarray:
        return np.array([engineer_features(r) for r in self.records], dtype=float).reshape(-1, 3)

    def labels(self) -> np.ndarray:
        return self.column("failure").astype(int)

    def subset(self, indices: Iterable[int]) -> "ExperimentTable":
        return ExperimentTable(tuple(self.records[i] for i in indices), self.provenance)

    def select_layout(self, layout: Layout | str) -> "ExperimentTable":
        layout = Layout(layout)
        return ExperimentTable(tuple(r for r in self.records if r.layout is layout), self.provenance)

    def where(self, filters: Mapping[str, str] | None) -> "ExperimentTable":
        """Rows matching every ``column=value`` filter (string or numeric compare)."""
        if not filters:
            return self
        keep = self.records
        for col, want in filters.items():
            key = canonical_column(col)
            if key in ("layout", "soil"):
                keep = tuple(r for r in keep if getattr(r, key).value == str(want).strip().lower())
            else:
                target = float(want)
                keep = tuple(r for r in keep if r.value(key) is not None and math.isclose(r.value(key), target, rel_tol=1e-9, abs_tol=1e-12))
        return ExperimentTable(keep, self.provenance)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in self.records:
            writer.writerow(_record_row(rec))
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _record_row(rec: ExperimentRecord) -> list[str]:
    row = [rec.layout.value, rec.soil.value]
    row += [_fmt(getattr(rec, attr)) for attr in _SCALAR_COLUMNS.values()]
    row += [_fmt(rec.td), _fmt(rec.te)]
    for series in (rec.erosion_intervals, rec.discharge_intervals):
        row += [_fmt(v) for v in series] if series is not None else [""] * 6
    row.append(_fmt(rec.failure))
    return row


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise BadValue(row, col, f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise BadValue(row, col, "not finite")
    return v


def _parse_row(raw: Mapping[str, str], row: int) -> ExperimentRecord:
    def cell(col):
        return (raw.get(col) or "").strip()

    try:
        layout = Layout(cell("layout").lower())
    except ValueError:
        raise BadValue(row, "layout", f"expected h_top or h_sub, got {cell('layout')!r}") from None
    try:
        soil = Soil(cell("soil").lower())
    except ValueError:
        raise BadValue(row, "soil", f"expected fine, medium or coarse, got {cell('soil')!r}") from None

    values = {}
    for col, attr in _SCALAR_COLUMNS.items():
        if not cell(col):
            raise BadValue(row, col, "empty cell")
        values[attr] = _parse_float(cell(col), row, col)

    def optional(col):
        return _parse_float(cell(col), row, col) if cell(col) else None

    def series(cols):
        present = [bool(cell(c)) for c in cols]
        if not any(present):
            return None
        if not all(present):
            raise BadValue(row, cols[present.index(False)], "interval series is incomplete")
        return tuple(_parse_float(cell(c), row, c) for c in cols)

    failure = None
    if cell("failure"):
        f = _parse_float(cell("failure"), row, "failure")
        if f not in (0.0, 1.0):
            raise BadValue(row, "failure", "must be 0 or 1")
        failure = int(f)

    try:
        return ExperimentRecord(
            layout=layout,
            soil=soil,
            td=optional("td_l_m2"),
            te=optional("te_g_m2"),
            erosion_intervals=series(_EROSION),
            discharge_intervals=series(_DISCHARGE),
            failure=failure,
            **values,
        )
    except BadValue as exc:
        raise BadValue(row, exc.column, str(exc).split(": ", 2)[-1]) from None


def parse_experiments(text: str, expected_layout: Layout | str | None = None, source: str = "") -> ExperimentTable:
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or [])]
    reader.fieldnames = header
    for col in CSV_HEADER:
        if col not in header:
            raise MissingColumn(col)
    records = [_parse_row(raw, i) for i, raw in enumerate(reader, start=1)]
    if expected_layout is not None:
        want = Layout(expected_layout)
        for i, rec in enumerate(records, start=1):
            if rec.layout is not want:
                raise LayoutMismatch(f"LayoutMismatch: row {i} is {rec.layout.value}, expected {want.value}")
    return ExperimentTable(tuple(records), source)


def load_experiments(path, expected_layout: Layout | str | None = None) -> ExperimentTable:
    """Read and validate an experiment CSV. Row numbers in errors are 1-based data rows."""
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    return parse_experiments(text, expected_layout, source=str(path))


# -- standardization ---------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    names: tuple[str, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    @classmethod
    def identity(cls, names: Sequence[str]) -> "Standardizer":
        return cls(tuple(names), (0.0,) * len(names), (1.0,) * len(names))

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.means)) / np.asarray(self.stds)

    def inverse_transform(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z * np.asarray(self.stds) + np.asarray(self.means)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "means": list(self.means), "stds": list(self.stds)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Standardizer":
        return cls(tuple(d["names"]), tuple(float(v) for v in d["means"]), tuple(float(v) for v in d["stds"]))


def standardize(data, columns: Sequence[str] | None = None) -> tuple[np.ndarray, Standardizer]:
    """Center and scale columns to mean 0 and sample std 1.

    ``data`` is either an :class:`ExperimentTable` (``columns`` names the
    columns to use) or a 2-D array (``columns`` only labels them).
    """
    if isinstance(data, ExperimentTable):
        if columns is None:
            raise UnknownColumn("UnknownColumn: columns are required for a table")
        names = [canonical_column(c) for c in columns]
        x = data.matrix(names)
    else:
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        names = list(columns) if columns is not None else [f"c{i}" for i in range(x.shape[1])]
    means, stds = [], []
    for j, name in enumerate(names):
        try:
            m, s = numerics.mean_std(x[:, j])
        except TooFewValues:
            raise TooFewValues(f"TooFewValues: column {name!r} needs at least 2 values") from None
        if s == 0.0:
            raise ConstantColumn(name)
        means.append(m)
        stds.append(s)
    scaler = Standardizer(tuple(names), tuple(means), tuple(stds))
    return scaler.transform(x), scaler


# -- correlation -------------------------------------------------------------


@dataclass(frozen=True)
class LabeledMatrix:
    labels: tuple[str, ...]
    values: np.ndarray

    def __getitem__(self, key):
        i, j = key
        return self.values[self.labels.index(i), self.labels.index(j)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([""] + list(self.labels))
        for label, row in zip(self.labels, self.values):
            writer.writerow([label] + [repr(float(v)) for v in row])
        return buf.getvalue()


def correlation_matrix(table: ExperimentTable, columns: Sequence[str]) -> LabeledMatrix:
    names = [canonical_column(c) for c in columns]
    cols = [table.column(c) for c in names]
    d = len(names)
    out = np.eye(d)
    for i in range(d):
        if np.all(cols[i] == cols[i][0]):
            raise ConstantColumn(names[i])
        for j in range(i + 1, d):
            out[i, j] = out[j, i] = numerics.pearson_corr(cols[i], cols[j])
    return LabeledMatrix(tuple(names), out)


# -- partitioning ------------------------------------------------------------


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-12))


def _largest_remainder(total: int, shares: Sequence[float]) -> list[int]:
    base = [int(math.floor(s)) for s in shares]
    rest = total - sum(base)
    order = sorted(range(len(shares)), key=lambda i: (-(shares[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def split_indices(n: int, test_fraction: float, seed: int, strata: Sequence | None = None) -> tuple[list[int], list[int]]:
    """Index-level train/test split; ``strata`` gives one class key per row."""
    if not 0 < test_fraction < 1:
        raise DegenerateSplit(f"DegenerateSplit: test fraction {test_fraction} not in (0, 1)")
    n_test = round_half_up(n * test_fraction)
    if n_test < 1 or n_test > n - 1:
        raise DegenerateSplit(f"DegenerateSplit: {n} rows at fraction {test_fraction} gives a test set of {n_test}")
    if strata is None:
        perm = numerics.seeded_shuffle(n, seed)
        test = sorted(perm[:n_test])
    else:
        classes = sorted(set(strata))
        members = {c: [i for i in range(n) if strata[i] == c] for c in classes}
        quotas = _largest_remainder(n_test, [len(members[c]) * n_test / n for c in classes])
        test = []
        for ci, (c, quota) in enumerate(zip(classes, quotas)):
            perm = numerics.seeded_shuffle(len(members[c]), numerics.derive_seed(seed, ci))
            test += [members[c][p] for p in perm[:quota]]
        test.sort()
    chosen = set(test)
    train = [i for i in range(n) if i not in chosen]
    return train, test


def split_train_test(table: ExperimentTable, test_fraction: float, seed: int, stratify_on: str | None = None):
    strata = None
    if stratify_on is not None:
        strata = list(table.column(stratify_on))
    train, test = split_indices(len(table), test_fraction, seed, strata)
    return table.subset(train), table.subset(test)


def kfold_partition(n: int, k: int, seed: int) -> list[list[int]]:
    """Shuffle ``range(n)`` and cut it into ``k`` folds whose sizes differ by at most one."""
    if not 2 <= k <= n:
        raise BadFoldCount(f"BadFoldCount: need 2 <= k <= n, got k={k}, n={n}")
    perm = numerics.seeded_shuffle(n, seed)
    small, extra = divmod(n, k)
    folds, start = [], 0
    for f in range(k):
        size = small + (1 if f < extra else 0)
        folds.append(sorted(perm[start : start + size]))
        start += size
    return folds


# -- synthetic stand-in data -------------------------------------------------

# Placeholder descriptors: the measured values are not published.
DEFAULT_WEV_KPA = {Soil.COARSE: 0.5, Soil.MEDIUM: 1.0, Soil.FINE: 2.0}
_SOIL_PLACEHOLDERS = {
    # cc, cu, contact angle (deg)
    Soil.FINE: (1.10, 1.60, 130.0),
    Soil.MEDIUM: (1.00, 1.50, 120.0),
    Soil.COARSE: (0.90, 1.40, 110.0),
}
D50_TO_D10 = 1.35


@dataclass(frozen=True)
class SynthDesign:
    """Full-factorial flume design: soils x rain intensities x slopes x layouts."""

    soils: Mapping[Soil, tuple[float, float]] = field(
        default_factory=lambda: {
            Soil.FINE: (0.2, 30.0),
            Soil.MEDIUM: (0.4, 32.0),
            Soil.COARSE: (0.65, 34.0),
        }
    )  # soil -> (d50 mm, friction angle deg)
    rain_intensities: tuple[float, ...] = (18.0, 70.0, 120.0)
    slopes: tuple[float, ...] = (20.0, 30.0)
    layouts: tuple[Layout, ...] = (Layout.H_TOP, Layout.H_SUB)


@dataclass(frozen=True)
class PlantedRules:
    """Response surfaces used by :func:`synth_generate`.

    ``td`` and ``te`` are linear in the engineered features and clipped at 0;
    ``failure`` thresholds a logit that is linear in the engineered features
    after standardising them over the H-Sub design cells.
    """

    td: tuple[float, float, float, float] = (11.3, -0.46, 0.025, 0.025)
    te: tuple[float, float, float, float] = (-15.2, -90.7, -5.2, 2.9)
    failure: tuple[float, float, float, float] = (0.0, -2.39, 0.53, 4.13)
    td_noise_sd: float = 3.0
    te_noise_sd: float = 300.0
    logit_noise_sd: float = 1.0
    interval_decay_per_ri: float = 0.01  # share_k ~ exp(-decay * RI * k)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def interval_shares(ri: float, decay_per_ri: float) -> list[float]:
    raw = [math.exp(-decay_per_ri * ri * k) for k in range(6)]
    total = sum(raw)
    return [r / total for r in raw]


def synth_generate(
    design: SynthDesign | None = None,
    wev_by_soil: Mapping[Soil | str, float] | None = None,
    noise_scale: float = 1.0,
    seed: int = 42,
    rules: PlantedRules | None = None,
) -> ExperimentTable:
    """One record per design cell with responses from :class:`PlantedRules`.

    Interval rates are the totals split over six 10-minute intervals by
    ``interval_shares`` and expressed per minute, so ``10 * sum(intervals)``
    equals the total. Noise is Gaussian, drawn from a seeded SplitMix64
    stream in design order, and multiplied by ``noise_scale``.
    """
    design = design or SynthDesign()
    rules = rules or PlantedRules()
    wev = {Soil(k): float(v) for k, v in (wev_by_soil or DEFAULT_WEV_KPA).items()}
    if noise_scale < 0 or not math.isfinite(noise_scale):
        raise BadDesign("BadDesign: noise_scale must be >= 0")
    if not design.soils or not design.rain_intensities or not design.slopes or not design.layouts:
        raise BadDesign("BadDesign: every design factor needs at least one level")
    for soil, (d50, _) in design.soils.items():
        if Soil(soil) not in wev:
            raise BadDesign(f"BadDesign: no water entry value for soil {Soil(soil).value!r}")
        if not d50 > 0:
            raise BadDesign(f"BadDesign: d50 for {Soil(soil).value!r} must be > 0")
    if any(v <= 0 for v in wev.values()):
        raise BadDesign("BadDesign: water entry values must be > 0")
    if any(ri < 0 for ri in design.rain_intensities) or any(not 0 < s < 90 for s in design.slopes):
        raise BadDesign("BadDesign: rain intensities must be >= 0 and slopes in (0, 90)")

    cells = [
        (Layout(layout), Soil(soil), ri, slope)
        for layout in design.layouts
        for soil in design.soils
        for ri in design.rain_intensities
        for slope in design.slopes
    ]

    def feats(soil, ri, slope):
        return (design.soils[soil][0] * ri, wev[soil] * ri, slope * ri)

    # failure-logit standardisation over the distinct (soil, RI, slope) cells
    grid = np.array([feats(s, ri, sl) for s in design.soils for ri in design.rain_intensities for sl in design.slopes])
    f_mean = grid.mean(axis=0)
    f_std = grid.std(axis=0, ddof=1) if len(grid) > 1 else np.ones(3)
    f_std = np.where(f_std > 0, f_std, 1.0)

    rng = numerics.SplitMix64(seed)
    records = []
    for layout, soil, ri, slope in cells:
        d50, friction = design.soils[soil]
        x = feats(soil, ri, slope)
        e_td, e_te, e_logit = rng.normal(), rng.normal(), rng.normal()
        td = max(0.0, rules.td[0] + sum(c * v for c, v in zip(rules.td[1:], x)) + noise_scale * rules.td_noise_sd * e_td)
        te = max(0.0, rules.te[0] + sum(c * v for c, v in zip(rules.te[1:], x)) + noise_scale * rules.te_noise_sd * e_te)
        shares = interval_shares(ri, rules.interval_decay_per_ri)
        z = (np.asarray(x) - f_mean) / f_std
        logit = rules.failure[0] + float(np.dot(rules.failure[1:], z)) + noise_scale * rules.logit_noise_sd * e_logit
        cc, cu, contact = _SOIL_PLACEHOLDERS[soil]
        records.append(
            ExperimentRecord(
                layout=layout,
                soil=soil,
                d50=d50,
                d10=d50 / D50_TO_D10,
                cc=cc,
                cu=cu,
                contact_angle=contact,
                friction_angle=friction,
                wev=wev[soil],
                slope=slope,
                rain_intensity=ri,
                td=td,
                te=te,
                erosion_intervals=tuple(te * s / 10.0 for s in shares),
                discharge_intervals=tuple(td * s / 10.0 for s in shares),
                failure=(1 if logit >= 0 else 0) if layout is Layout.H_SUB else None,
            )
        )
    provenance = json.dumps(
        {
            "synthesis_seed": seed,
            "noise_scale": noise_scale,
            "wev_kpa": {s.value: v for s, v in wev.items()},
            "rules": rules.to_dict(),
            "failure_feature_means": f_mean.tolist(),
            "failure_feature_stds": f_std.tolist(),
        },
        sort_keys=True,
    )
    return ExperimentTable(tuple(records), provenance)


def table_from_rows(rows: Iterable[ExperimentRecord], provenance: str = "") -> ExperimentTable:
    return ExperimentTable(tuple(rows), provenance)


def with_values(record: ExperimentRecord, **changes) -> ExperimentRecord:
    return replace(record, **changes)
