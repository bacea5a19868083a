"""Oracle suites behind ``semimg verify``.

Each check pits a production routine against an independent slow reference
(pairwise expansion, finite differences, exhaustive search, sorting) and
yields ``(name, passed, detail)`` tuples.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from . import maplayer
from .potts import potts_1d
from .rankpool import VARIANTS, coefficients, coefficients_bruteforce
from .semantics import estimate_background

SUITES = ("coeffs", "gradcheck", "potts", "median")


def check_coeffs():
    worst = 0.0
    for variant in VARIANTS:
        for T in range(2, 51):
            diff = np.abs(coefficients(T, variant).alpha - coefficients_bruteforce(T, variant).alpha).max()
            worst = max(worst, float(diff))
    yield "closed form == pairwise expansion, T in [2, 50]", worst <= 1e-9, f"max abs diff {worst:.3e}"
    worst_sum = max(abs(math.fsum(coefficients(T, v).alpha)) for v in VARIANTS for T in range(2, 201))
    yield "sum(alpha) == 0, T in [2, 200]", worst_sum <= 1e-12, f"max |sum| {worst_sum:.3e}"


def check_gradcheck(trials: int = 100, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst_fd = 0.0
    worst_adj = 0.0
    for _ in range(trials):
        T = int(rng.integers(2, 7))
        c, h, w = (int(n) for n in rng.integers(1, 5, size=3))
        stack = rng.standard_normal((T, c, h, w))
        coeffs = coefficients(T, VARIANTS[int(rng.integers(2))])
        worst_fd = max(worst_fd, maplayer.grad_check(stack, coeffs, probe_count=8, h=1e-5, rng=rng))
        g = rng.standard_normal((c, h, w))
        delta = rng.standard_normal((T, c, h, w))
        lhs = float(np.vdot(maplayer.backward(g, coeffs), delta))
        rhs = float(np.vdot(g, maplayer.forward(delta, coeffs)))
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(1.0, abs(lhs)))
    yield "finite differences vs backward (h=1e-5)", bool(worst_fd <= 1e-6), f"max rel err {worst_fd:.3e}"
    yield "adjoint identity <backward(g), d> == <g, forward(d)>", worst_adj <= 1e-12, f"max rel gap {worst_adj:.3e}"


def exhaustive_potts(signal, gamma):
    """Best (energy, jumps, boundaries) over every segmentation of ``signal``."""
    f = np.asarray(signal, dtype=np.float64)
    n = len(f)
    cost = {(s, t): float(((f[s:t] - f[s:t].mean()) ** 2).sum())
            for s in range(n) for t in range(s + 1, n + 1)}
    best = None
    for k in range(n):
        for cuts in combinations(range(1, n), k):
            edges = (0,) + cuts + (n,)
            e = gamma * k + sum(cost[st] for st in zip(edges[:-1], edges[1:]))
            # k ascends, so a strict improvement is needed to replace a solution with fewer jumps
            if best is None or e < best[0] - 1e-12 * max(1.0, abs(best[0])):
                best = (e, k, cuts)
    return best


def check_potts(trials: int = 100, seed: int = 0, gammas=(0.01, 0.1, 1.0)):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        n = int(rng.integers(1, 15))
        f = rng.random(n)
        for g in gammas:
            sol = potts_1d(f, g)
            e, k, cuts = exhaustive_potts(f, g)
            if not (math.isclose(sol.energy, e, rel_tol=1e-9, abs_tol=1e-12) and sol.boundaries == cuts):
                bad += 1
    yield f"potts_1d == exhaustive search ({trials} signals x {len(gammas)} gammas)", bad == 0, f"{bad} mismatches"


def check_median(trials: int = 50, seed: int = 0):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        T = int(rng.integers(1, 32))
        seq = rng.random((T, 32, 32, 3))
        got = estimate_background(seq)
        ref = np.empty((32, 32, 3))
        for idx in np.ndindex(32, 32, 3):
            col = sorted(seq[(slice(None),) + idx])
            ref[idx] = col[(T - 1) // 2]
        bad += int(not np.array_equal(got, ref))
    yield f"temporal median == per-pixel sort ({trials} sequences)", bad == 0, f"{bad} mismatches"


def run(suite: str):
    names = SUITES if suite == "all" else (suite,)
    table = {"coeffs": check_coeffs, "gradcheck": check_gradcheck,
             "potts": check_potts, "median": check_median}
    for name in names:
        for label, ok, detail in table[name]():
            yield name, label, ok, detail
