"""Feature clustering used to define coarse levels.

All algorithms cluster the *columns* of the feature matrix: every feature is a
point in R^N (N = number of samples).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import FeatureMatrix

DISTANCES = ("euclidean", "cosine", "jaccard")


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of the features into non-empty clusters.

    ``prototype_index[s]`` is the feature that leads cluster ``s`` (leader
    follower, Renyi subsampling); k-means instead stores dense mean vectors
    in ``prototype_vectors`` (N x F_C).
    """

    membership: np.ndarray
    prototype_index: np.ndarray | None = None
    prototype_vectors: np.ndarray | None = None
    method: str = ""
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=np.int64)
        object.__setattr__(self, "membership", m)
        if m.ndim != 1 or len(m) == 0:
            raise ValueError("membership must be a non-empty 1-D array")
        if m.min() < 0:
            raise ValueError("negative cluster id")
        sizes = np.bincount(m)
        if np.any(sizes == 0):
            raise ValueError(f"empty cluster(s): {np.flatnonzero(sizes == 0).tolist()}")
        if self.prototype_index is not None:
            p = np.asarray(self.prototype_index, dtype=np.int64)
            object.__setattr__(self, "prototype_index", p)
            if len(p) != len(sizes):
                raise ValueError("one prototype per cluster required")
            if not np.array_equal(m[p], np.arange(len(p))):
                raise ValueError("every prototype must belong to its own cluster")

    @property
    def n_features(self) -> int:
        return len(self.membership)

    @property
    def n_clusters(self) -> int:
        return int(self.membership.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.membership, minlength=self.n_clusters)

    @property
    def has_feature_prototypes(self) -> bool:
        return self.prototype_index is not None

    @classmethod
    def singletons(cls, n_features: int) -> "ClusterAssignment":
        idx = np.arange(n_features)
        return cls(idx, prototype_index=idx, method="singletons")


@dataclass(frozen=True)
class ClusterQuality:
    mean_sim: float
    max_sim: float
    q75: float
    n_members: int = 0


# ---------------------------------------------------------------------------
# distances between sparse columns

class _Columns:
    """Row-major view of the columns of X plus the norms the distances need."""

    def __init__(self, X: FeatureMatrix):
        self.XT = X.csr.T.tocsr()
        self.sq = X.column_sq_norms()
        pattern = self.XT.copy()
        pattern.data = np.ones_like(pattern.data)
        pattern.data[self.XT.data == 0] = 0.0
        self.pattern = pattern
        self.count = np.asarray(pattern.sum(axis=1)).ravel()

    def dots(self, i):
        """Inner products of column(s) ``i`` with every column: (len(i), F)."""
        return (self.XT[i] @ self.XT.T).toarray()

    def distances(self, i, kind, j=None):
        i = np.atleast_1d(i)
        if kind == "jaccard":
            inter = (self.pattern[i] @ self.pattern.T).toarray()
            ci, cj = self.count[i][:, None], self.count[None, :]
            union = ci + cj - inter
            with np.errstate(invalid="ignore", divide="ignore"):
                d = np.where(union > 0, 1.0 - inter / np.where(union > 0, union, 1), 0.0)
        else:
            g = self.dots(i)
            si, sj = self.sq[i][:, None], self.sq[None, :]
            if kind == "euclidean":
                d = np.sqrt(np.maximum(si + sj - 2.0 * g, 0.0))
            elif kind == "cosine":
                d = _cosine_from_dots(g, si, sj)
            else:
                raise ValueError(f"unknown distance {kind!r}; choose from {DISTANCES}")
        return d if j is None else d[:, j]


def _cosine_from_dots(g, si, sj):
    nn = np.sqrt(si * sj)
    both_zero = (si == 0) & (sj == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(nn > 0, 1.0 - g / np.where(nn > 0, nn, 1.0), np.where(both_zero, 0.0, 1.0))
    return np.maximum(d, 0.0)


def column_distances(X: FeatureMatrix, rows, cols=None, kind="euclidean") -> np.ndarray:
    """Distance matrix between feature columns ``rows`` and ``cols`` (all if None)."""
    return _Columns(X).distances(np.atleast_1d(rows), kind, cols)


def distances_to_vectors(X: FeatureMatrix, vectors, kind="euclidean") -> np.ndarray:
    """(F, K) distances from every feature column to dense vectors (N x K)."""
    C = np.asarray(vectors, dtype=np.float64)
    if C.ndim == 1:
        C = C[:, None]
    if kind == "jaccard":
        P = X.csr.copy()
        P.data = (P.data != 0).astype(np.float64)
        Cp = (C != 0).astype(np.float64)
        inter = P.T @ Cp
        union = np.asarray(P.sum(axis=0)).T + Cp.sum(axis=0)[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, 1.0 - inter / np.where(union > 0, union, 1), 0.0)
    g = X.csr.T @ C
    si = X.column_sq_norms()[:, None]
    sj = (C ** 2).sum(axis=0)[None, :]
    if kind == "euclidean":
        return np.sqrt(np.maximum(si + sj - 2.0 * g, 0.0))
    if kind == "cosine":
        return _cosine_from_dots(g, si, sj)
    raise ValueError(f"unknown distance {kind!r}; choose from {DISTANCES}")


# ---------------------------------------------------------------------------
# leader-follower

def leader_follower(X: FeatureMatrix, tolerance: float, distance="euclidean",
                    update_leaders=False) -> ClusterAssignment:
    """Single sequential pass over the features in column order.

    A feature joins the closest leader if that distance is below
    ``tolerance``; otherwise it founds a new cluster. With ``update_leaders``
    the leader moves to the running mean of its members and the result
    carries dense prototypes instead of leader indices.
    """
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    if distance not in DISTANCES:
        raise ValueError(f"unknown distance {distance!r}")
    F = X.n_features
    cols = _Columns(X)
    membership = np.empty(F, dtype=np.int64)
    leaders: list[int] = []

    if not update_leaders:
        for i in range(F):
            if leaders:
                d = cols.distances(i, distance)[0, leaders]
                k = int(np.argmin(d))
                if d[k] < tolerance:
                    membership[i] = k
                    continue
            membership[i] = len(leaders)
            leaders.append(i)
        return ClusterAssignment(membership, prototype_index=np.array(leaders, dtype=np.int64),
                                 method="leader_follower",
                                 info={"tolerance": tolerance, "distance": distance})

    dense = X.csr.tocsc()
    centers = np.zeros((X.n_samples, 0))
    counts: list[int] = []
    for i in range(F):
        x = dense[:, i].toarray().ravel()
        if counts:
            d = _dense_point_distances(x, centers, distance)
            k = int(np.argmin(d))
            if d[k] < tolerance:
                membership[i] = k
                counts[k] += 1
                centers[:, k] += (x - centers[:, k]) / counts[k]
                continue
        membership[i] = len(counts)
        counts.append(1)
        centers = np.column_stack([centers, x])
    return ClusterAssignment(membership, prototype_vectors=centers, method="leader_follower",
                             info={"tolerance": tolerance, "distance": distance,
                                   "update_leaders": True})


def _dense_point_distances(x, C, kind):
    if kind == "euclidean":
        return np.sqrt(np.maximum(((C - x[:, None]) ** 2).sum(axis=0), 0.0))
    if kind == "cosine":
        g = x @ C
        return _cosine_from_dots(g, np.full_like(g, x @ x), (C ** 2).sum(axis=0))
    xs, Cs = x != 0, C != 0
    inter = (Cs & xs[:, None]).sum(axis=0)
    union = (Cs | xs[:, None]).sum(axis=0)
    return np.where(union > 0, 1.0 - inter / np.maximum(union, 1), 0.0)


def leader_follower_for_size(X: FeatureMatrix, n_clusters: int, distance="euclidean",
                             max_bisections=200) -> ClusterAssignment:
    """Search the leader-follower tolerance that yields ``n_clusters`` clusters.

    The cluster count is a step function of the tolerance; the search
    bisects on it and returns the closest count found if the exact size is
    not reachable (the returned ``info['tolerance']`` records the value).
    """
    F = X.n_features
    if not 1 <= n_clusters <= F:
        raise ValueError(f"n_clusters must be in [1, {F}]")
    cols = _Columns(X)
    dmax = 0.0
    for start in range(0, F, 512):
        dmax = max(dmax, float(cols.distances(np.arange(start, min(F, start + 512)), distance).max()))
    lo, hi = 0.0, 2.0 * dmax + 1.0
    best = None
    for _ in range(max_bisections):
        tol = 0.5 * (lo + hi)
        if tol <= 0:
            break
        a = leader_follower(X, tol, distance)
        if best is None or abs(a.n_clusters - n_clusters) < abs(best.n_clusters - n_clusters):
            best = a
        if a.n_clusters == n_clusters:
            return a
        if a.n_clusters > n_clusters:
            lo = tol
        else:
            hi = tol
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return best


# ---------------------------------------------------------------------------
# k-means++

def kmeanspp_seed(X: FeatureMatrix, n_clusters: int, seed=None) -> np.ndarray:
    """Indices of ``n_clusters`` features chosen by k-means++ seeding.

    First pick uniform; each next pick with probability proportional to the
    squared distance to the nearest pick so far. Once every remaining
    feature coincides with a pick, the rest are drawn uniformly from the
    unpicked ones.
    """
    F = X.n_features
    if not 1 <= n_clusters <= F:
        raise ValueError(f"n_clusters={n_clusters} must be in [1, {F}]")
    rng = np.random.default_rng(seed)
    cols = _Columns(X)
    chosen = [int(rng.integers(F))]
    d2 = cols.distances(chosen[0], "euclidean")[0] ** 2
    d2[chosen[0]] = 0.0
    picked = np.zeros(F, dtype=bool)
    picked[chosen[0]] = True
    while len(chosen) < n_clusters:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(F, p=d2 / total))
        else:
            nxt = int(rng.choice(np.flatnonzero(~picked)))
        chosen.append(nxt)
        picked[nxt] = True
        d2 = np.minimum(d2, cols.distances(nxt, "euclidean")[0] ** 2)
        d2[picked] = 0.0
    return np.array(chosen, dtype=np.int64)


def kmeans(X: FeatureMatrix, n_clusters: int, max_iters=100, seed=None) -> ClusterAssignment:
    """Lloyd iterations from k-means++ seeds (squared Euclidean objective).

    Stops when the assignment no longer changes. An emptied cluster is
    reseeded at the feature farthest from its current prototype.
    ``info`` holds the number of iterations and the objective trace.
    """
    seeds = kmeanspp_seed(X, n_clusters, seed)
    Xc = X.csr.tocsc()
    C = Xc[:, seeds].toarray()
    sq = X.column_sq_norms()

    def assign(C):
        d2 = np.maximum(sq[:, None] + (C ** 2).sum(axis=0)[None, :] - 2.0 * (X.csr.T @ C), 0.0)
        labels = np.argmin(d2, axis=1)
        own = d2[np.arange(len(labels)), labels]
        for k in range(n_clusters):
            if np.any(labels == k):
                continue
            sizes = np.bincount(labels, minlength=n_clusters)
            movable = sizes[labels] > 1
            far = int(np.argmax(np.where(movable, own, -1.0)))
            labels[far] = k
            C[:, k] = Xc[:, far].toarray().ravel()
            own[far] = 0.0
        return labels, float(own.sum())

    def means(labels):
        S = sp.csr_matrix((np.ones(len(labels)), (np.arange(len(labels)), labels)),
                          shape=(len(labels), n_clusters))
        sizes = np.asarray(S.sum(axis=0)).ravel()
        return (X.csr @ S).toarray() / sizes[None, :]

    labels, obj = assign(C)
    history = [obj]
    n_iter = 0
    converged = False
    while n_iter < max_iters:
        n_iter += 1
        C = means(labels)
        history.append(_kmeans_objective(X, labels, C))
        new, obj = assign(C)
        history.append(obj)
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    if not converged:
        C = means(labels)
    return ClusterAssignment(labels, prototype_vectors=C, method="kmeans",
                             info={"n_iter": n_iter, "converged": converged,
                                   "objective": history, "seeds": seeds})


def _kmeans_objective(X: FeatureMatrix, labels, C) -> float:
    sq = X.column_sq_norms()
    g = np.asarray((X.csr.multiply(C[:, labels])).sum(axis=0)).ravel()
    d2 = sq + (C[:, labels] ** 2).sum(axis=0) - 2.0 * g
    return float(np.maximum(d2, 0.0).sum())


# ---------------------------------------------------------------------------
# quadratic Renyi entropy subsampling

def _bandwidth(n_dims, sigma, bandwidth):
    if bandwidth is None:
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        return np.full(n_dims, float(sigma))
    D = np.asarray(bandwidth, dtype=np.float64)
    if D.shape != (n_dims,) or np.any(D <= 0):
        raise ValueError(f"bandwidth must be {n_dims} positive values")
    return D


def _scaled(X: FeatureMatrix, D) -> FeatureMatrix:
    return FeatureMatrix(sp.diags(1.0 / (D * math.sqrt(2.0))) @ X.csr)


def renyi_entropy(X: FeatureMatrix, subset, sigma=0.6, bandwidth=None) -> float:
    """Quadratic Renyi entropy of the features in ``subset``.

    S = -log( sum_kl exp(-|u_kl|^2 / 2) / (m^2 |D|^2) ),  u_kl = (x_k - x_l) / (D sqrt 2)

    with m = len(subset) and |D| the product of the per-dimension bandwidths
    (D = sigma I unless ``bandwidth`` is given). Evaluated in log space.
    """
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        raise ValueError("empty subset")
    D = _bandwidth(X.n_samples, sigma, bandwidth)
    Xs = _scaled(X, D)
    cols = _Columns(Xs)
    d = cols.distances(subset, "euclidean", subset)
    v = np.exp(-0.5 * d ** 2).sum()
    return _entropy_from_sum(v, len(subset), D)


def _entropy_from_sum(v, m, D):
    return -math.log(v) + 2.0 * math.log(m) + 2.0 * float(np.log(D).sum())


def renyi_subsample(X: FeatureMatrix, n_clusters: int, sigma=0.6, n_swaps=None, seed=None,
                    bandwidth=None, distance="euclidean") -> ClusterAssignment:
    """Pick ``n_clusters`` prototype features by maximizing quadratic Renyi entropy.

    Starting from a random working set, ``n_swaps`` random (working,
    training) pairs are proposed; a swap is kept only if it strictly
    increases the working-set entropy. Entropy is updated incrementally
    from per-feature kernel sums. Remaining features join the nearest
    prototype under ``distance``.
    """
    F = X.n_features
    if not 1 <= n_clusters <= F:
        raise ValueError(f"n_clusters={n_clusters} must be in [1, {F}]")
    if n_swaps is None:
        n_swaps = 10 * F
    D = _bandwidth(X.n_samples, sigma, bandwidth)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(F)
    work, train = perm[:n_clusters].copy(), perm[n_clusters:].copy()

    kc = _Columns(_scaled(X, D))

    def kernel_column(j):
        return np.exp(-0.5 * kc.distances(j, "euclidean")[0] ** 2)

    # ksum[j] = sum over the working set of kappa(j, k)
    in_work = np.zeros(F, dtype=bool)
    in_work[work] = True
    ksum = np.zeros(F)
    for start in range(0, n_clusters, 256):
        block = work[start:start + 256]
        ksum += np.exp(-0.5 * kc.distances(block, "euclidean") ** 2).sum(axis=0)
    v = float(ksum[work].sum())
    trace = [_entropy_from_sum(v, n_clusters, D)]
    accepted = 0

    if len(train):
        for _ in range(n_swaps):
            a = int(rng.integers(n_clusters))
            b = int(rng.integers(len(train)))
            o, i = int(work[a]), int(train[b])
            k_io = math.exp(-0.5 * float(kc.distances(i, "euclidean", [o])[0, 0]) ** 2)
            v_new = v - 2.0 * ksum[o] + 1.0 + 2.0 * (ksum[i] - k_io) + 1.0
            if v_new < v:
                ksum += kernel_column(i) - kernel_column(o)
                work[a], train[b] = i, o
                v = v_new
                accepted += 1
                trace.append(_entropy_from_sum(v, n_clusters, D))

    protos = np.sort(work)
    d = _Columns(X).distances(np.arange(F), distance, protos) if F <= 4096 else \
        np.vstack([_Columns(X).distances(np.arange(s, min(F, s + 4096)), distance, protos)
                   for s in range(0, F, 4096)])
    membership = np.argmin(d, axis=1)
    membership[protos] = np.arange(n_clusters)
    return ClusterAssignment(membership, prototype_index=protos, method="renyi",
                             info={"entropy_trace": trace, "accepted": accepted,
                                   "entropy": trace[-1], "n_swaps": n_swaps, "sigma": sigma})


# ---------------------------------------------------------------------------
# quality statistics

def member_distances(X: FeatureMatrix, assignment: ClusterAssignment, distance="euclidean"):
    """Distance of every non-prototype member to the prototype of its cluster."""
    m = assignment.membership
    if assignment.prototype_index is not None:
        protos = assignment.prototype_index
        members = np.setdiff1d(np.arange(len(m)), protos)
        if members.size == 0:
            return np.zeros(0)
        cols = _Columns(X)
        out = np.empty(members.size)
        for s in range(0, members.size, 1024):
            blk = members[s:s + 1024]
            out[s:s + 1024] = cols.distances(blk, distance)[np.arange(blk.size), protos[m[blk]]]
        return out
    if assignment.prototype_vectors is None:
        raise ValueError("assignment has no prototypes")
    d = distances_to_vectors(X, assignment.prototype_vectors, distance)
    return d[np.arange(len(m)), m]


def nearest_rank_quantile(values, q) -> float:
    values = np.sort(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        return 0.0
    rank = max(1, math.ceil(q * values.size))
    return float(values[rank - 1])


def cluster_stats(X: FeatureMatrix, assignment: ClusterAssignment,
                  distance="euclidean") -> ClusterQuality:
    """Mean, max and 75% (nearest-rank) quantile of member-to-prototype distances."""
    d = member_distances(X, assignment, distance)
    if d.size == 0:
        return ClusterQuality(0.0, 0.0, 0.0, 0)
    return ClusterQuality(float(d.mean()), float(d.max()), nearest_rank_quantile(d, 0.75), int(d.size))


def cluster(X: FeatureMatrix, algorithm: str, *, n_clusters=None, tolerance=None,
            distance="euclidean", seed=None, sigma=0.6, n_swaps=None,
            max_iters=100) -> ClusterAssignment:
    """Dispatch by algorithm name: ``lf`` / ``km`` / ``re`` (long names accepted)."""
    algorithm = {"leader_follower": "lf", "kmeans": "km", "renyi": "re"}.get(algorithm, algorithm)
    if algorithm == "lf":
        if tolerance is not None:
            return leader_follower(X, tolerance, distance)
        if n_clusters is None:
            raise ValueError("leader-follower needs a tolerance or a target size")
        return leader_follower_for_size(X, n_clusters, distance)
    if n_clusters is None:
        raise ValueError(f"{algorithm} needs n_clusters")
    if algorithm == "km":
        return kmeans(X, n_clusters, max_iters=max_iters, seed=seed)
    if algorithm == "re":
        return renyi_subsample(X, n_clusters, sigma=sigma, n_swaps=n_swaps, seed=seed,
                               distance=distance)
    raise ValueError(f"unknown clustering algorithm {algorithm!r}")
