"""PCA on standardized columns and seeded K-means."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics
from .dataset import ExperimentRecord, ExperimentTable, Standardizer, canonical_column, standardize
from .errors import BadK, DimensionMismatch, EmptyInput, NotBinary, TooFewRows

PCA_COLUMNS = ("d50", "wev", "slope", "ri", "td", "te")


@dataclass(frozen=True)
class PcaModel:
    columns: tuple[str, ...]
    standardizer: Standardizer
    loadings: np.ndarray  # (components, columns), row i is component i
    eigenvalues: np.ndarray
    ratios: np.ndarray
    cumulative: np.ndarray

    @property
    def n_components(self) -> int:
        return self.loadings.shape[0]

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "standardizer": self.standardizer.to_dict(),
            "loadings": self.loadings.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "ratios": self.ratios.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PcaModel":
        ratios = np.asarray(d["ratios"], dtype=float)
        return cls(
            columns=tuple(d["columns"]),
            standardizer=Standardizer.from_dict(d["standardizer"]),
            loadings=np.asarray(d["loadings"], dtype=float),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
            ratios=ratios,
            cumulative=np.cumsum(ratios),
        )


def check_loadings(loadings, tol: float = 1e-9) -> list[str]:
    """List violations of unit norm / mutual orthogonality among loading vectors."""
    vecs = np.atleast_2d(np.asarray(loadings, dtype=float))
    problems = []
    for i, v in enumerate(vecs):
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > tol:
            problems.append(f"component {i + 1}: norm {norm:.6f}")
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            dot = float(vecs[i] @ vecs[j])
            if abs(dot) > tol:
                problems.append(f"components {i + 1},{j + 1}: dot {dot:.6f}")
    return problems


def fit_pca(data, columns: Sequence[str] = PCA_COLUMNS) -> PcaModel:
    """Standardize the columns and eigendecompose their correlation matrix."""
    if isinstance(data, ExperimentTable):
        names = tuple(canonical_column(c) for c in columns)
        x = data.matrix(names)
    else:
        x = np.asarray(data, dtype=float)
        names = tuple(columns) if len(columns) == x.shape[1] else tuple(f"c{i}" for i in range(x.shape[1]))
    if x.shape[0] < 2:
        raise TooFewRows(f"TooFewRows: PCA needs at least 2 rows, got {x.shape[0]}")
    z, scaler = standardize(x, names)
    cov = z.T @ z / (z.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    eig = numerics.eigh_sym(cov)
    values = np.clip(eig.eigenvalues, 0.0, None)
    ratios = values / values.sum()
    return PcaModel(names, scaler, eig.eigenvectors.T.copy(), values, ratios, np.cumsum(ratios))


def _row_vector(pca: PcaModel, row) -> np.ndarray:
    if isinstance(row, ExperimentRecord):
        return np.array([row.value(c) for c in pca.columns], dtype=float)
    vec = np.asarray(row, dtype=float)
    if vec.shape[-1] != len(pca.columns):
        raise DimensionMismatch(f"DimensionMismatch: expected {len(pca.columns)} values, got {vec.shape[-1]}")
    return vec


def project(pca: PcaModel, row, n_components: int | None = None) -> np.ndarray:
    """Scores of one row (or an array of rows) on the leading components."""
    n = pca.n_components if n_components is None else n_components
    if not 1 <= n <= pca.n_components:
        raise DimensionMismatch(f"DimensionMismatch: {n} components requested, {pca.n_components} available")
    z = pca.standardizer.transform(_row_vector(pca, row))
    return z @ pca.loadings[:n].T


def project_table(pca: PcaModel, table: ExperimentTable, n_components: int = 2) -> np.ndarray:
    return project(pca, table.matrix(pca.columns), n_components)


def reconstruct(pca: PcaModel, scores) -> np.ndarray:
    """Standardized row from its scores (exact when all components are kept)."""
    scores = np.asarray(scores, dtype=float)
    k = scores.shape[-1]
    return scores @ pca.loadings[:k]


@dataclass(frozen=True)
class VarianceRow:
    component: int
    eigenvalue: float
    ratio: float
    cumulative: float


def explained_variance_report(pca: PcaModel) -> list[VarianceRow]:
    cum = 0.0
    rows = []
    for i, (ev, r) in enumerate(zip(pca.eigenvalues, pca.ratios), start=1):
        cum += float(r)
        rows.append(VarianceRow(i, float(ev), float(r), cum))
    return rows


def pca_report_csv(pca: PcaModel) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["component", "eigenvalue", "ratio", "cumulative", *pca.columns])
    for row, loading in zip(explained_variance_report(pca), pca.loadings):
        writer.writerow(
            [row.component, repr(row.eigenvalue), repr(row.ratio), repr(row.cumulative), *(repr(float(v)) for v in loading)]
        )
    return buf.getvalue()


# -- K-means -----------------------------------------------------------------

KMEANS_SHIFT_TOL = 1e-10
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class KMeansResult:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int
    restarts: int
    seed: int
    inertia_history: tuple[float, ...] = ()


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)  # ties -> lowest centroid index
    return labels, d2[np.arange(len(points)), labels]


def _seed_centroids(points: np.ndarray, k: int, rng: numerics.SplitMix64, first: int | None = None) -> np.ndarray:
    """Distance-squared weighted seeding (k-means++); ``first`` fixes the opening centre."""
    n = len(points)
    chosen = [rng.randbelow(n) if first is None else first]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total == 0.0:
            idx = rng.randbelow(n)
        else:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centroids: np.ndarray):
    labels, dist = _assign(points, centroids)
    history = [float(dist.sum())]
    iterations = 0
    for iterations in range(1, KMEANS_MAX_ITER + 1):
        new = centroids.copy()
        for c in range(len(centroids)):
            members = points[labels == c]
            if len(members):
                new[c] = members.mean(axis=0)
        # empty clusters take the point farthest from its own centroid
        for c in range(len(centroids)):
            if not np.any(labels == c):
                own = ((points - new[labels]) ** 2).sum(axis=1)
                far = int(np.argmax(own))
                new[c] = points[far]
                labels = labels.copy()
                labels[far] = c
        shift = float(np.max(np.abs(new - centroids)))
        new_labels, dist = _assign(points, new)
        history.append(float(dist.sum()))
        centroids = new
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable or shift < KMEANS_SHIFT_TOL:
            break
    # final centroids as means of the final assignment
    for c in range(len(centroids)):
        members = points[labels == c]
        if len(members):
            centroids[c] = members.mean(axis=0)
    dist = ((points - centroids[labels]) ** 2).sum(axis=1)
    history.append(float(dist.sum()))
    centroids, labels = _hartigan(points, centroids, labels, history)
    dist = ((points - centroids[labels]) ** 2).sum(axis=1)
    return centroids, labels, float(dist.sum()), iterations, history


def _hartigan(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray, history: list[float]):
    """Single-point transfers that strictly lower inertia (Hartigan-Wong style).

    Lloyd stops at any fixed point of the assign/update map; moving one point
    at a time while accounting for the centroid shift escapes many of them.
    """
    labels = labels.copy()
    k = len(centroids)
    counts = np.bincount(labels, minlength=k).astype(float)
    for _ in range(KMEANS_MAX_ITER):
        moved = False
        for i, x in enumerate(points):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d2 = ((centroids - x) ** 2).sum(axis=1)
            cost_out = counts[a] / (counts[a] - 1) * d2[a]
            gains = counts / (counts + 1) * d2
            gains[a] = np.inf
            b = int(np.argmin(gains))
            if gains[b] < cost_out * (1 - 1e-12) - 1e-15:
                centroids[a] = (centroids[a] * counts[a] - x) / (counts[a] - 1)
                centroids[b] = (centroids[b] * counts[b] + x) / (counts[b] + 1)
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = True
                history.append(float(((points - centroids[labels]) ** 2).sum()))
        if not moved:
            break
    for c in range(k):
        members = points[labels == c]
        if len(members):
            centroids[c] = members.mean(axis=0)
    return centroids, labels


def kmeans(points, k: int, seed: int = 42, restarts: int = 10) -> KMeansResult:
    """Best-of-``restarts`` Lloyd clustering from seeded k-means++ starts.

    Points are put in lexicographic order before seeding, so the result does
    not depend on the order the caller supplies them in.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise EmptyInput("EmptyInput: no points to cluster")
    if not 1 <= k <= pts.shape[0]:
        raise BadK(f"BadK: k={k} with {pts.shape[0]} points")
    if restarts < 1:
        raise BadK("BadK: restarts must be >= 1")
    order = np.lexsort(pts.T[::-1])
    sorted_pts = pts[order]

    best = None
    for r in range(restarts):
        rng = numerics.SplitMix64(numerics.derive_seed(seed, r))
        # the first n restarts open from each sorted point in turn
        init = _seed_centroids(sorted_pts, k, rng, r if r < len(sorted_pts) else None)
        run = _lloyd(sorted_pts, init)
        if best is None or run[2] < best[2]:
            best = run
    centroids, labels, inertia, iterations, history = best
    assignments = np.empty_like(labels)
    assignments[order] = labels
    return KMeansResult(k, centroids, assignments, inertia, iterations, restarts, seed, tuple(history))


@dataclass(frozen=True)
class ClusterAlignment:
    mapping: dict[int, int]  # cluster id -> label
    mismatches: int
    mismatched_indices: tuple[int, ...]


def align_clusters_to_labels(assignments, labels) -> ClusterAlignment:
    """Pick the cluster-to-label bijection with the fewest disagreements."""
    a = np.asarray(assignments).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if a.size != y.size:
        raise DimensionMismatch("DimensionMismatch: assignments and labels differ in length")
    if not np.all(np.isin(y, (0, 1))) or not np.all(np.isin(a, (0, 1))):
        raise NotBinary("NotBinary: alignment needs two clusters and binary labels")
    best = None
    for mapping in ({0: 0, 1: 1}, {0: 1, 1: 0}):
        mapped = np.where(a == 0, mapping[0], mapping[1])
        wrong = tuple(int(i) for i in np.flatnonzero(mapped != y))
        if best is None or len(wrong) < best.mismatches:
            best = ClusterAlignment(mapping, len(wrong), wrong)
    return best


def assignment_csv(scores, result: KMeansResult, labels, alignment: ClusterAlignment) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "z1", "z2", "cluster", "label", "mismatch"])
    wrong = set(alignment.mismatched_indices)
    for i, (z, c, y) in enumerate(zip(np.asarray(scores), result.assignments, labels)):
        writer.writerow([i + 1, repr(float(z[0])), repr(float(z[1])) if len(z) > 1 else "", int(c), int(y), int(i in wrong)])
    return buf.getvalue()
