"""Multiphase piecewise-constant level-set segmentation of a single channel.

``m`` level-set functions encode ``n = 2**m`` regions by the sign pattern of
``phi``: region ``k`` (1-based) owns the pixels whose bits of ``k - 1`` are
set where ``phi_j > 0``, with ``phi_1`` the least significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import EvolutionDiverged

DEFAULT_EPSILON = 1.0
DEFAULT_V = 0.01
INIT_CLIP = 3.0
GRAD_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class LevelSetState:
    phi: np.ndarray  # (m, H, W)
    means: np.ndarray  # (n,) with n == 2**m
    epsilon: float = DEFAULT_EPSILON
    v: float = DEFAULT_V

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.ndim == 2:
            phi = phi[None]
        means = np.asarray(self.means, dtype=np.float64).ravel()
        if phi.ndim != 3:
            raise ValueError(f"phi must be (m, H, W), got {phi.shape}")
        if len(means) != 2 ** phi.shape[0]:
            raise ValueError(f"{phi.shape[0]} level sets need {2 ** phi.shape[0]} means, got {len(means)}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not np.all(np.isfinite(phi)):
            raise EvolutionDiverged("non-finite level-set values")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "means", means)

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def n(self) -> int:
        return 2 ** self.m


def heaviside(phi, epsilon=DEFAULT_EPSILON):
    """Smoothed step ``0.5 * (1 + (2/pi) * arctan(phi / epsilon))``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return 0.5 * (1.0 + (2.0 / np.pi) * np.arctan(np.asarray(phi, dtype=np.float64) / epsilon))


def dirac(phi, epsilon=DEFAULT_EPSILON):
    """Derivative of :func:`heaviside` with respect to phi."""
    phi = np.asarray(phi, dtype=np.float64)
    return (epsilon / np.pi) / (epsilon * epsilon + phi * phi)


def _bits(n, m):
    return (np.arange(n)[:, None] >> np.arange(m)[None, :]) & 1  # (n, m)


def indicators(phi, epsilon=DEFAULT_EPSILON) -> np.ndarray:
    """All ``n`` smoothed region indicators, shape ``(n, H, W)``."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim == 2:
        phi = phi[None]
    m = phi.shape[0]
    h = heaviside(phi, epsilon)
    bits = _bits(2 ** m, m)
    out = np.ones((2 ** m,) + phi.shape[1:])
    for k in range(2 ** m):
        for j in range(m):
            out[k] *= h[j] if bits[k, j] else 1.0 - h[j]
    return out


def region_indicator(state: LevelSetState, k: int) -> np.ndarray:
    if not 1 <= k <= state.n:
        raise IndexError(f"region index {k} outside 1..{state.n}")
    h = heaviside(state.phi, state.epsilon)
    out = np.ones(state.phi.shape[1:])
    for j in range(state.m):
        out = out * (h[j] if ((k - 1) >> j) & 1 else 1.0 - h[j])
    return out


def _length(hj):
    gy, gx = np.gradient(hj)
    return float(np.sqrt(gx * gx + gy * gy).sum())


def data_term(image, state: LevelSetState) -> float:
    img = np.asarray(image, dtype=np.float64)
    chi = indicators(state.phi, state.epsilon)
    res = (img[None] - state.means[:, None, None]) ** 2
    return float((res * chi).sum())


def energy(image, state: LevelSetState) -> float:
    """Data fit over the soft regions plus ``v`` times the length of each H(phi_j)."""
    e = data_term(image, state)
    if state.v:
        h = heaviside(state.phi, state.epsilon)
        e += state.v * sum(_length(h[j]) for j in range(state.m))
    return e


def update_means(image, state: LevelSetState) -> np.ndarray:
    """Indicator-weighted region means; a region with zero mass keeps its mean."""
    img = np.asarray(image, dtype=np.float64)
    chi = indicators(state.phi, state.epsilon)
    mass = chi.reshape(state.n, -1).sum(axis=1)
    num = (chi * img[None]).reshape(state.n, -1).sum(axis=1)
    out = state.means.copy()
    ok = mass > 0
    out[ok] = num[ok] / mass[ok]
    return out


def curvature(phi) -> np.ndarray:
    """``div(grad phi / |grad phi|)`` by central differences."""
    gy, gx = np.gradient(phi)
    norm = np.maximum(np.sqrt(gx * gx + gy * gy), GRAD_FLOOR)
    return np.gradient(gx / norm, axis=1) + np.gradient(gy / norm, axis=0)


def data_force(image, state: LevelSetState) -> np.ndarray:
    """``sum_k (I - c_k)^2 * d chi_k / d H(phi_j)`` for each j, shape (m, H, W)."""
    img = np.asarray(image, dtype=np.float64)
    h = heaviside(state.phi, state.epsilon)
    m, n = state.m, state.n
    bits = _bits(n, m)
    res = (img[None] - state.means[:, None, None]) ** 2
    out = np.zeros_like(state.phi)
    for j in range(m):
        for k in range(n):
            d = np.ones_like(img)
            for i in range(m):
                if i != j:
                    d = d * (h[i] if bits[k, i] else 1.0 - h[i])
            out[j] += (res[k] * d) if bits[k, j] else -(res[k] * d)
    return out


def step(image, state: LevelSetState) -> LevelSetState:
    """One explicit gradient-descent update of every phi (Jacobi style)."""
    force = data_force(image, state)
    dt = 0.4 / (state.v + np.abs(force).max())
    phi = state.phi
    new = np.empty_like(phi)
    for j in range(state.m):
        kappa = curvature(phi[j]) if state.v else 0.0
        new[j] = phi[j] + dt * dirac(phi[j], state.epsilon) * (state.v * kappa - force[j])
    if not np.all(np.isfinite(new)):
        raise EvolutionDiverged("level set became non-finite")
    return replace(state, phi=new)


def evolve(image, state: LevelSetState, iterations: int = 5) -> LevelSetState:
    """``iterations`` descent steps, refreshing the region means after each."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    img = np.asarray(image, dtype=np.float64)
    for _ in range(iterations):
        state = step(img, state)
        state = replace(state, means=update_means(img, state))
    return state


def init_phi(labels, m: int) -> np.ndarray:
    """Signed distance to the boundary of each bit plane of a label map, clipped to +-3."""
    labels = np.asarray(labels)
    out = np.empty((m,) + labels.shape)
    for j in range(m):
        plane = ((labels >> j) & 1).astype(bool)
        if plane.all():
            out[j] = INIT_CLIP
        elif not plane.any():
            out[j] = -INIT_CLIP
        else:
            out[j] = ndimage.distance_transform_edt(plane) - ndimage.distance_transform_edt(~plane)
    return np.clip(out, -INIT_CLIP, INIT_CLIP)


def crisp_labels(state: LevelSetState) -> np.ndarray:
    """0-based region index per pixel from the sign pattern (phi > 0 sets a bit)."""
    lab = np.zeros(state.phi.shape[1:], dtype=np.int64)
    for j in range(state.m):
        lab |= (state.phi[j] > 0).astype(np.int64) << j
    return lab


def partition_means(image, labels, fallback) -> np.ndarray:
    """Exact per-region mean over a crisp label map; empty regions use ``fallback``."""
    img = np.asarray(image, dtype=np.float64).ravel()
    lab = np.asarray(labels).ravel()
    out = np.array(fallback, dtype=np.float64, copy=True)
    for k in np.unique(lab):
        vals = img[lab == k]
        ref = vals[0]
        out[k] = ref + (vals - ref).mean()
    return out


def render(image, state: LevelSetState) -> np.ndarray:
    """Fill each crisp region with the image's mean over that region."""
    lab = crisp_labels(state)
    return partition_means(image, lab, state.means)[lab]
