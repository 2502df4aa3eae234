"""K-means over the i-th necks of all queries, one cluster bank per neck index."""

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from .containers import read_archive, write_archive
from .exceptions import ClusteringError

logger = logging.getLogger(__name__)

INERTIA_TOLERANCE = 1e-9


@dataclass
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations: int
    converged: bool


@dataclass
class ClusterBank:
    """
    ``centers`` is (N_e, N_c, d_e); ``assignments[i]`` maps query_id to the
    cluster of that query's i-th neck; ``inertia[i]`` is the within-cluster
    sum of squares of neck index i.
    """
    centers: np.ndarray
    assignments: tuple
    inertia: tuple
    selection: str = 'center'

    @property
    def num_necks(self):
        return self.centers.shape[0]

    @property
    def num_clusters(self):
        return self.centers.shape[1]


def _update_centers(points, labels, k, distances):
    """Cluster means; empty clusters jump to the points farthest from their own center."""
    centers = np.zeros((k, points.shape[1]))
    counts = np.bincount(labels, minlength=k)
    np.add.at(centers, labels, points)
    filled = counts > 0
    centers[filled] /= counts[filled, None]
    empty = np.flatnonzero(~filled)
    if len(empty):
        own = distances[np.arange(len(points)), labels]
        farthest = np.argsort(-own, kind='stable')[:len(empty)]
        centers[empty] = points[farthest]
        logger.debug('reseeded %d empty cluster(s)', len(empty))
    return centers


def lloyd(points, centers, max_iter=100):
    """
    Lloyd iterations from the given centers until assignments stop changing.

    Raises ``ClusteringError`` if the inertia ever increases.
    """
    k = len(centers)
    labels, previous = None, np.inf
    for iteration in range(1, max_iter + 1):
        distances = cdist(points, centers, 'sqeuclidean')
        assigned = distances.argmin(axis=1)
        inertia = float(distances[np.arange(len(points)), assigned].sum())
        if inertia > previous + INERTIA_TOLERANCE * max(1.0, previous):
            raise ClusteringError(f'inertia increased from {previous} to {inertia} at iteration {iteration}')
        previous = inertia
        if labels is not None and np.array_equal(assigned, labels):
            return KMeansResult(centers, labels, inertia, iteration, True)
        labels = assigned
        centers = _update_centers(points, labels, k, distances)
    inertia = float(((points - centers[labels]) ** 2).sum())
    return KMeansResult(centers, labels, inertia, max_iter, False)


def _restart(points, k, seed, max_iter):
    initial, _ = kmeans_plusplus(points, k, random_state=seed)
    return lloyd(points, initial.astype(np.float64), max_iter)


def kmeans(points, k, seed=0, restarts=8, max_iter=100, n_jobs=1):
    """
    Best-of-``restarts`` k-means with k-means++ seeding.

    The restart with the lowest inertia wins; ties go to the earlier restart.
    Deterministic for a given seed.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ClusteringError(f'expected an (M, d) matrix, got shape {points.shape}')
    if k < 1 or len(points) < k:
        raise ClusteringError(f'cannot form {k} clusters from {len(points)} points')
    if not np.all(np.isfinite(points)):
        raise ClusteringError('points must be finite')
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(restarts)]
    results = Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(_restart)(points, k, s, max_iter) for s in seeds
    )
    best = int(np.argmin([r.inertia for r in results]))
    logger.debug('k-means k=%d: best restart %d, inertia %.6g', k, best, results[best].inertia)
    return results[best]


def _nearest(points, centers):
    distances = cdist(points, centers, 'sqeuclidean')
    labels = distances.argmin(axis=1)
    return labels, float(distances[np.arange(len(points)), labels].sum())


def _sample_member(points, labels, centers, j, rng):
    """One random member of cluster j; a cluster left empty keeps its centroid."""
    members = np.flatnonzero(labels == j)
    if not len(members):
        logger.warning('cluster %d has no members; keeping its centroid', j)
        return centers[j]
    return points[rng.choice(members)]


def build_cluster_bank(necks, config, selection=None):
    """
    Cluster each neck index independently over all queries.

    ``necks`` maps query_id to an (N_e, d_e) matrix. ``selection`` (default
    ``config.center_selection``) picks what becomes a center: the averaged
    centroid (``center``), one random member per cluster (``sample``) or
    N_c random necks without clustering (``random``).
    """
    selection = selection or config.center_selection
    query_ids = list(necks)
    if len(query_ids) < config.num_clusters:
        raise ClusteringError(f'{len(query_ids)} queries cannot fill {config.num_clusters} clusters')
    stacked = np.stack([np.asarray(necks[q], dtype=np.float64) for q in query_ids])
    rng = np.random.default_rng(config.seed)
    centers, assignments, inertia = [], [], []
    for index in range(stacked.shape[1]):
        points = stacked[:, index]
        if selection == 'random':
            chosen = points[rng.choice(len(points), size=config.num_clusters, replace=False)]
            labels, total = _nearest(points, chosen)
        else:
            result = kmeans(points, config.num_clusters, seed=config.seed + index,
                            restarts=config.kmeans_restarts, max_iter=config.kmeans_max_iter,
                            n_jobs=config.workers)
            labels, total, chosen = result.labels, result.inertia, result.centers
            if selection == 'sample':
                chosen = np.stack([_sample_member(points, labels, result.centers, j, rng)
                                   for j in range(config.num_clusters)])
        centers.append(chosen)
        assignments.append({q: int(label) for q, label in zip(query_ids, labels)})
        inertia.append(total)
        logger.info('neck %d: %d clusters (%s), inertia %.4f', index, config.num_clusters, selection, total)
    return ClusterBank(np.stack(centers), tuple(assignments), tuple(inertia), selection)


def cluster_purity(assignment, labels):
    """Fraction of queries that share the majority planted label of their cluster."""
    members = {}
    for query_id, cluster in assignment.items():
        members.setdefault(cluster, []).append(labels[query_id])
    majority = sum(Counter(group).most_common(1)[0][1] for group in members.values())
    return majority / len(assignment)


def save_cluster_bank(path, bank):
    meta = {
        'kind': 'cluster_bank',
        'selection': bank.selection,
        'inertia': list(bank.inertia),
        'assignments': [dict(a) for a in bank.assignments],
    }
    write_archive(path, {'centers': bank.centers.astype(np.float64)}, meta)


def load_cluster_bank(path):
    records, meta = read_archive(path)
    return ClusterBank(
        records['centers'],
        tuple(meta['assignments']),
        tuple(meta['inertia']),
        meta.get('selection', 'center'),
    )


def assignment_table(bank):
    rows = [(index, query_id, cluster)
            for index, assignment in enumerate(bank.assignments)
            for query_id, cluster in assignment.items()]
    return pd.DataFrame(rows, columns=['neck', 'query_id', 'cluster'])
