"""Weighted global k-means colour quantisation.

Clusters are grown one at a time.  The seed for each new cluster is picked
from the weighted means of circular windows laid on a grid over the image;
every candidate is refined with a short Lloyd run and the one with the lowest
distortion wins.  Identical pixel values are merged (their weights summed)
before any iteration, which is exact for both the distortion and the
centroid update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClusters, EmptyInput

MAX_LOCAL_STEPS = 20
REL_TOL = 1e-6
_BATCH_BUDGET = 2_000_000


@dataclass(frozen=True)
class CircularWindow:
    diameter: int = 9

    def __post_init__(self):
        if self.diameter < 3 or self.diameter % 2 == 0:
            raise ValueError(f"window diameter must be odd and >= 3, got {self.diameter}")

    @property
    def radius(self) -> int:
        return (self.diameter - 1) // 2

    @property
    def stride(self) -> int:
        return self.radius

    def mask(self) -> np.ndarray:
        r = self.radius
        y, x = np.mgrid[-r:r + 1, -r:r + 1]
        return (x * x + y * y) <= r * r

    def contains(self, center, point) -> bool:
        dy = point[0] - center[0]
        dx = point[1] - center[1]
        return dy * dy + dx * dx <= self.radius ** 2


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (K, D)
    labels: np.ndarray | None = None  # per point / pixel
    weights: np.ndarray | None = None

    @property
    def n_clusters(self) -> int:
        return len(self.centroids)


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None]
    elif x.ndim > 2:
        x = x.reshape(-1, x.shape[-1])
    return x


def _as_centroids(centroids, dim) -> np.ndarray:
    c = np.asarray(centroids, dtype=np.float64)
    if c.ndim <= 1:
        c = c.reshape(-1, dim)
    return c


def _sq_dist(x, c):
    # (N, D), (K, D) -> (N, K)
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=-1)


def assign(points, centroids) -> np.ndarray:
    """Nearest-centroid index per point; ties go to the lowest index."""
    x = _as_points(points)
    c = _as_centroids(centroids, x.shape[1])
    return np.argmin(_sq_dist(x, c), axis=1)


def distortion(points, centroids, weights=None, labels=None) -> float:
    """Weighted sum of squared distances from each point to its centroid."""
    x = _as_points(points)
    if x.shape[0] == 0:
        raise EmptyInput("distortion of an empty point set")
    c = _as_centroids(centroids, x.shape[1])
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if labels is None:
        labels = assign(x, c)
    r = ((x - c[np.asarray(labels)]) ** 2).sum(axis=1)
    return float(np.dot(w, r))


def _weighted_means(x, w, labels, old):
    """Per-cluster weighted mean, shifted by each cluster's first member.

    The shift makes the mean of identical members exact.  Empty clusters keep
    their previous centroid.
    """
    k = len(old)
    new = old.copy()
    for j in range(k):
        sel = labels == j
        wsum = w[sel].sum()
        if not sel.any() or wsum <= 0:
            continue
        xs = x[sel]
        ref = xs[0]
        new[j] = ref + (w[sel, None] * (xs - ref)).sum(axis=0) / wsum
    return new


def lloyd_step(points, model: ClusterModel, weights=None) -> ClusterModel:
    """Reassign every point to its nearest centroid, then recentre."""
    x = _as_points(points)
    c = _as_centroids(model.centroids, x.shape[1])
    if len(c) < 1:
        raise ValueError("model needs at least one centroid")
    if weights is None:
        weights = model.weights
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    labels = assign(x, c)
    return ClusterModel(_weighted_means(x, w, labels, c), labels, w)


def quantize(image, model: ClusterModel) -> np.ndarray:
    """Label map of nearest-centroid indices with the image's spatial shape."""
    a = np.asarray(image, dtype=np.float64)
    c = np.asarray(model.centroids, dtype=np.float64)
    if c.size == 0:
        raise ValueError("empty cluster model")
    if a.ndim == 2:
        spatial, pts = a.shape, a.reshape(-1, 1)
    else:
        spatial, pts = a.shape[:-1], a.reshape(-1, a.shape[-1])
    return assign(pts, _as_centroids(c, pts.shape[1])).reshape(spatial)


# --------------------------------------------------------------------------
# batched local refinement

def _batched_lloyd(x, w, cents, max_steps=MAX_LOCAL_STEPS, tol=REL_TOL):
    """Run Lloyd on many centroid sets at once.

    x: (U, D) points, w: (U,) weights, cents: (B, K, D).  Each batch member
    stops on its own once the relative distortion change drops below ``tol``.
    Returns refined centroids and their final distortion (B,).
    """
    cents = cents.copy()
    b, k, _ = cents.shape
    u = len(x)
    active = np.ones(b, dtype=bool)
    prev = None
    ar = np.arange(u)
    for _ in range(max_steps):
        d2 = ((x[None, :, None, :] - cents[:, None, :, :]) ** 2).sum(-1)  # (B, U, K)
        lab = d2.argmin(axis=2)  # (B, U)
        theta = (np.take_along_axis(d2, lab[..., None], axis=2)[..., 0] * w).sum(axis=1)
        if prev is not None:
            done = np.abs(prev - theta) <= tol * np.maximum(np.abs(prev), 1e-300)
            active &= ~done
            if not active.any():
                break
        prev = theta
        onehot = np.zeros((b, u, k))
        onehot[np.arange(b)[:, None], ar[None, :], lab] = 1.0
        mass = np.einsum("buk,u->bk", onehot, w)
        # reference = first member of each cluster
        first = np.where(onehot.any(axis=1), onehot.argmax(axis=1), 0)  # (B, K)
        ref = x[first]  # (B, K, D)
        resid = x[None, :, None, :] - ref[:, None, :, :]  # (B, U, K, D)
        acc = np.einsum("buk,u,bukd->bkd", onehot, w, resid)
        with np.errstate(invalid="ignore", divide="ignore"):
            upd = ref + acc / mass[..., None]
        keep = (mass <= 0) | ~active[:, None]
        cents = np.where(keep[..., None], cents, upd)
    d2 = ((x[None, :, None, :] - cents[:, None, :, :]) ** 2).sum(-1)
    theta = (d2.min(axis=2) * w).sum(axis=1)
    return cents, theta


def _batched_lloyd_1d(x, w, cents, max_steps=MAX_LOCAL_STEPS, tol=REL_TOL):
    """Scalar fast path of ``_batched_lloyd``.

    ``x`` must be sorted and distinct.  In one dimension every cluster is a
    contiguous run of the sorted points, so sums come from prefix sums.
    """
    x = x[:, 0]
    c = cents[:, :, 0].copy()
    b, k = c.shape
    u = len(x)
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cx = np.concatenate([[0.0], np.cumsum(w * x)])
    cxx = np.concatenate([[0.0], np.cumsum(w * x * x)])
    rows = np.arange(b)[:, None]

    def runs(c):
        order = np.argsort(c, axis=1, kind="stable")
        cs = np.take_along_axis(c, order, axis=1)
        mids = 0.5 * (cs[:, 1:] + cs[:, :-1])
        cuts = np.searchsorted(x, mids.ravel(), side="right").reshape(b, k - 1)
        edges = np.concatenate([np.zeros((b, 1), int), cuts, np.full((b, 1), u)], axis=1)
        return order, cs, edges[:, :-1], edges[:, 1:]

    def theta_of(cs, e0, e1):
        mass = cw[e1] - cw[e0]
        sx = cx[e1] - cx[e0]
        sxx = cxx[e1] - cxx[e0]
        return np.maximum(sxx - 2 * cs * sx + cs * cs * mass, 0.0).sum(axis=1)

    active = np.ones(b, dtype=bool)
    prev = None
    for _ in range(max_steps):
        order, cs, e0, e1 = runs(c)
        theta = theta_of(cs, e0, e1)
        if prev is not None:
            active &= ~(np.abs(prev - theta) <= tol * np.maximum(np.abs(prev), 1e-300))
            if not active.any():
                break
        prev = theta
        mass = cw[e1] - cw[e0]
        with np.errstate(invalid="ignore", divide="ignore"):
            new = (cx[e1] - cx[e0]) / mass
        single = (e1 - e0) == 1
        new = np.where(single, x[np.minimum(e0, u - 1)], new)
        new = np.where((mass > 0) & active[:, None], new, cs)
        c[rows, order] = new
    order, cs, e0, e1 = runs(c)
    return c[:, :, None], theta_of(cs, e0, e1)


def window_candidates(image, weights, window: CircularWindow) -> np.ndarray:
    """Weighted mean of each circular window on the stride grid, (G, D)."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    h, wd, d = a.shape
    w = np.ones((h, wd)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(h, wd)
    disk = window.mask()
    r = window.radius
    step = window.stride
    cand = []
    for y in range(0, h, step):
        for x in range(0, wd, step):
            y0, y1 = max(0, y - r), min(h, y + r + 1)
            x0, x1 = max(0, x - r), min(wd, x + r + 1)
            inside = disk[y0 - y + r:y1 - y + r, x0 - x + r:x1 - x + r]
            ww = w[y0:y1, x0:x1][inside]
            mass = ww.sum()
            if mass > 0:
                cand.append((ww[:, None] * a[y0:y1, x0:x1][inside]).sum(axis=0) / mass)
    cand = np.array(cand).reshape(-1, d)
    return cand[np.all(np.isfinite(cand), axis=1)]


def _unique_rows(a):
    # first-occurrence order
    _, idx = np.unique(a, axis=0, return_index=True)
    return a[np.sort(idx)]


def global_kmeans(image, n: int, window: CircularWindow | int = 9, weights=None) -> ClusterModel:
    """Incremental global k-means on the pixels of ``image``.

    ``image`` is ``(H, W)`` for one channel or ``(H, W, D)`` for vector
    samples.  Raises DegenerateClusters (carrying a fallback model of the
    distinct values) when ``n`` exceeds the number of distinct samples.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not isinstance(window, CircularWindow):
        window = CircularWindow(int(window))
    a = np.asarray(image, dtype=np.float64)
    if a.size == 0:
        raise EmptyInput("empty image")
    spatial = a.shape if a.ndim == 2 else a.shape[:-1]
    pts = a.reshape(-1, 1) if a.ndim == 2 else a.reshape(-1, a.shape[-1])
    w_pix = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=np.float64).ravel()

    # merge identical samples
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    w_u = np.bincount(inverse, weights=w_pix, minlength=len(uniq))

    if n > len(uniq):
        model = ClusterModel(uniq.copy(), None, w_pix)
        model.labels = quantize(a, model)
        raise DegenerateClusters(
            f"{n} clusters requested but only {len(uniq)} distinct values", model)

    ref = uniq[0]
    cents = (ref + (w_u[:, None] * (uniq - ref)).sum(0) / w_u.sum())[None, :]
    scalar = uniq.shape[1] == 1
    lloyd = _batched_lloyd_1d if scalar else _batched_lloyd
    cand = _unique_rows(window_candidates(a.reshape(spatial + (-1,)), w_pix, window))
    for k in range(2, n + 1):
        fresh = cand[~np.any(np.all(cand[:, None, :] == cents[None, :, :], axis=2), axis=1)]
        if len(fresh) == 0:
            # windows exhausted: fall back to the data points themselves
            fresh = uniq[~np.any(np.all(uniq[:, None, :] == cents[None, :, :], axis=2), axis=1)]
        trial = np.concatenate(
            [np.broadcast_to(cents, (len(fresh),) + cents.shape), fresh[:, None, :]], axis=1)
        chunk = len(trial) if scalar else max(1, _BATCH_BUDGET // (len(uniq) * k * uniq.shape[1]))
        best_theta, best = np.inf, None
        for s in range(0, len(trial), chunk):
            refined, theta = lloyd(uniq, w_u, trial[s:s + chunk])
            i = int(np.argmin(theta))
            if theta[i] < best_theta:
                best_theta, best = theta[i], refined[i]
        cents = best
    # lexicographic order for a stable label numbering
    cents = cents[np.lexsort(cents.T[::-1])]
    model = ClusterModel(cents, None, w_pix)
    model.labels = quantize(a, model)
    return model
