"""Rank pooling of intermediate feature maps as a differentiable layer.

The pooling weights are held constant, so the layer is linear in its input
and its Jacobian with respect to slice ``t`` is ``alpha_t`` times identity.
"""

from __future__ import annotations

import numpy as np

from .errors import LengthMismatch
from .rankpool import RankCoefficients


def _stack(stack):
    x = np.asarray(stack, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"feature stack must be (T, C, H, W), got {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("feature stack needs T >= 2")
    return x


def forward(stack, coeffs: RankCoefficients) -> np.ndarray:
    """Pool a ``(T, C, H, W)`` stack into one ``(C, H, W)`` map."""
    x = _stack(stack)
    if x.shape[0] != coeffs.T:
        raise LengthMismatch(f"stack has T={x.shape[0]}, coefficients T={coeffs.T}")
    return np.tensordot(coeffs.alpha, x, axes=1)


def backward(upstream, coeffs: RankCoefficients) -> np.ndarray:
    """Gradient w.r.t. the stack: slice ``t`` receives ``alpha_t * upstream``."""
    g = np.asarray(upstream, dtype=np.float64)
    if coeffs.T < 2:
        raise ValueError("coefficients need T >= 2")
    return coeffs.alpha.reshape((-1,) + (1,) * g.ndim) * g[None]


def grad_check(stack, coeffs: RankCoefficients, probe_count: int = 16, h: float = 1e-5,
               rng=None) -> float:
    """Largest relative gap between backward() and central differences.

    The scalar loss is ``<g, forward(stack)>`` for a fixed random ``g``; each
    probe perturbs one randomly chosen stack entry by ``+-h``.
    """
    if probe_count < 1:
        raise ValueError("probe_count must be >= 1")
    if h <= 0:
        raise ValueError("h must be > 0")
    rng = np.random.default_rng(rng)
    x = _stack(stack).copy()
    # magnitudes bounded away from zero keep the relative error meaningful
    g = rng.choice([-1.0, 1.0], size=x.shape[1:]) * rng.uniform(0.5, 1.5, size=x.shape[1:])
    analytic = backward(g, coeffs)

    def loss(a):
        return float(np.vdot(g, forward(a, coeffs)))

    worst = 0.0
    for _ in range(probe_count):
        idx = tuple(int(rng.integers(n)) for n in x.shape)
        keep = x[idx]
        hi, lo = keep + h, keep - h
        x[idx] = hi
        up = loss(x)
        x[idx] = lo
        down = loss(x)
        x[idx] = keep
        # divide by the step actually represented, not the nominal 2h
        numeric = (up - down) / (hi - lo)
        a = analytic[idx]
        scale = max(abs(a), abs(numeric))
        if scale > 0:
            worst = max(worst, abs(a - numeric) / scale)
    return worst
