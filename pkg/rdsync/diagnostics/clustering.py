from __future__ import annotations

import logging
from typing import Literal, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist, squareform
from scipy.stats import circmean

from rdsync.core.models import ClusterReport

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
Metric = Literal["euclidean", "arc"]


def wrapped_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise angle difference in [-pi, pi)."""
    return np.mod(a - b + np.pi, TWO_PI) - np.pi


def distance_matrix(points: np.ndarray, metric: Metric = "euclidean") -> np.ndarray:
    if metric == "arc":
        diff = wrapped_difference(points[:, None, :], points[None, :, :])
        D = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(D, 0.0)
        return D
    return squareform(pdist(points))


def default_linkage_epsilon(sigma: float, dt: float) -> float:
    """20x the per-step noise scale sigma*sqrt(dt)."""
    return 20.0 * sigma * np.sqrt(dt)


def _centers(points: np.ndarray, labels: np.ndarray, metric: Metric) -> list:
    centers = []
    for lab in np.unique(labels):
        members = points[labels == lab]
        if metric == "arc":
            centers.append(circmean(members, high=TWO_PI, low=0.0, axis=0))
        else:
            centers.append(members.mean(axis=0))
    return centers


def cluster_count(points: Sequence[Sequence[float]], linkage_epsilon: float, metric: Metric = "euclidean") -> ClusterReport:
    """
    Single-linkage clusters at threshold linkage_epsilon: two points share a
    cluster iff an epsilon-chain joins them. Centers are sorted
    lexicographically so the report does not depend on point order.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("cluster_count needs at least one point")
    if not linkage_epsilon > 0:
        raise ValueError("linkage_epsilon must be positive")
    if metric == "arc":
        pts = np.mod(pts, TWO_PI)

    n = pts.shape[0]
    if n == 1:
        labels = np.ones(1, dtype=int)
        D = np.zeros((1, 1))
    else:
        D = distance_matrix(pts, metric)
        Z = linkage(squareform(D, checks=False), method="single")
        labels = fcluster(Z, t=linkage_epsilon, criterion="distance")

    centers = _centers(pts, labels, metric)
    uniq = np.unique(labels)
    sizes = [int(np.count_nonzero(labels == lab)) for lab in uniq]
    diam = 0.0
    for lab in uniq:
        idx = np.flatnonzero(labels == lab)
        if idx.size > 1:
            diam = max(diam, float(np.max(D[np.ix_(idx, idx)])))

    order = sorted(range(len(centers)), key=lambda i: tuple(np.round(centers[i], 12)))
    logger.debug("cluster_count: %d points -> %d clusters (eps=%g)", n, len(uniq), linkage_epsilon)
    return ClusterReport(
        points=pts.tolist(),
        linkage_epsilon=float(linkage_epsilon),
        metric=metric,
        cluster_count=len(uniq),
        cluster_centers=[[float(v) for v in np.atleast_1d(centers[i])] for i in order],
        cluster_sizes=[sizes[i] for i in order],
        max_intra_cluster_diameter=diam,
    )
