"""Brute-force cross-checks for the analytic demand and equilibrium code.

Nothing here calls into ``pricedisc``, ``quantity_model`` or ``price_model``.
The market dataclasses are only read for their raw fields; demand, supply and
mean qualities are recomputed from scratch with deliberately different
methods (sampling, interval intersection, lattice search).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist import TypeDistribution
from .errors import NotImplementableError, ValidationError
from .population import InformationStructure

CHUNK = 1 << 18


@dataclass(frozen=True)
class OracleConfig:
    samples: int = 10**6
    seed: int = 0
    grid_resolution: float = 1e-4

    def __post_init__(self):
        problems = []
        if int(self.samples) < 10**4:
            problems.append(f"samples = {self.samples} must be >= 10000")
        if not self.grid_resolution > 0:
            problems.append(f"grid_resolution = {self.grid_resolution} must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            problems.append(f"seed = {self.seed} must fit in 64 unsigned bits")
        if problems:
            raise ValidationError(problems)


def _pairs(menu) -> np.ndarray:
    pairs = getattr(menu, "pairs", menu)
    return np.asarray([(float(p), float(q)) for p, q in pairs], dtype=float).reshape(-1, 2)


def sample_types(dist: TypeDistribution, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF transform of uniforms; bisection on F where no closed form exists."""
    if dist.has_closed_form_quantile:
        return np.asarray(dist.ppf(u), dtype=float)
    lo = np.full_like(u, dist.a)
    hi = np.full_like(u, dist.b)
    while np.max(hi - lo) > 1e-12:
        mid = 0.5 * (lo + hi)
        below = np.asarray(dist.cdf(mid)) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class MCDemand:
    demands: np.ndarray
    stderr: np.ndarray
    samples: int

    def within(self, analytic: Sequence[float], sigmas: float = 3.0) -> np.ndarray:
        """Per pair, whether the analytic value lies inside the sigma band.

        A zero standard error (no buyer ever picked the pair, or all did)
        falls back to one sample's worth of slack.
        """
        err = np.maximum(self.stderr, 1.0 / self.samples)
        return np.abs(np.asarray(analytic) - self.demands) <= sigmas * err


def mc_demand(menu, dist: TypeDistribution, cfg: OracleConfig = OracleConfig()) -> MCDemand:
    """Simulated share of buyers choosing each pair (highest index wins ties)."""
    pq = _pairs(menu)
    k = len(pq)
    n = int(cfg.samples)
    n_chunks = -(-n // CHUNK)
    seeds = np.random.SeedSequence(int(cfg.seed)).spawn(n_chunks)
    counts = np.zeros(k + 1, dtype=np.int64)
    for c, seed in enumerate(seeds):
        size = min(CHUNK, n - c * CHUNK)
        u = np.random.default_rng(seed).random(size)
        m = sample_types(dist, u)
        util = np.zeros((size, k + 1))
        util[:, 1:] = m[:, None] * pq[:, 1] - pq[:, 0]
        # argmax returns the first maximum, so scan the columns right to left
        choice = k - np.argmax(util[:, ::-1], axis=1)
        counts += np.bincount(choice, minlength=k + 1)
    share = counts[1:] / n
    return MCDemand(share, np.sqrt(share * (1.0 - share) / n), n)


# quantity model, recomputed independently


def _interval_demand(p: np.ndarray, q: np.ndarray, dist: TypeDistribution) -> np.ndarray:
    """Mass of types preferring each pair to every other pair and to nothing."""
    out = np.zeros(len(p))
    for i in range(len(p)):
        lo, hi = dist.a, dist.b
        lo = max(lo, p[i] / q[i])
        for j in range(len(p)):
            if j == i:
                continue
            if q[j] == q[i]:
                if p[j] < p[i] or (p[j] == p[i] and j > i):
                    hi = -math.inf
                continue
            x = (p[i] - p[j]) / (q[i] - q[j])
            if q[i] > q[j]:
                lo = max(lo, x)
            else:
                hi = min(hi, x)
        if hi > lo:
            out[i] = float(dist.cdf(hi)) - float(dist.cdf(lo))
    return out


def _group_stats(structure: InformationStructure, market):
    pop = market.pop
    w = np.array([k ** (-1.0 / market.alpha) for k in market.k])
    stats = []
    for g in structure.groups:
        ids = [i for b in g for i in pop.blocks[b]]
        mass = np.array([pop.atoms[i].mass for i in ids]) * w[ids]
        x = np.array([pop.atoms[i].quality for i in ids])
        stats.append((float(mass @ x / mass.sum()), float(mass.sum())))
    stats.sort()
    return np.array([s[0] for s in stats]), np.array([s[1] for s in stats])


def _bisect_increasing(fn, lo: float, hi: float, iters: int = 200) -> float:
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def grid_equilibrium(structure: InformationStructure, market, cfg: OracleConfig = OracleConfig()) -> np.ndarray:
    """Clearing prices for 1 or 2 groups by lattice search and nested bisection.

    Prices are returned in ascending order of the groups' expected quality.
    """
    q, K = _group_stats(structure, market)
    n = len(q)
    if n > 2:
        raise ValidationError("grid_equilibrium handles at most two groups")
    dist, e = market.dist, 1.0 / market.alpha

    def excess(p):
        return K * p**e - _interval_demand(p, q, dist)

    top = q * dist.b
    if n == 1:
        pts = np.linspace(0.0, top[0], max(3, int(round(1.0 / cfg.grid_resolution))) + 1)[1:]
        vals = K[0] * pts**e - (1.0 - dist.cdf(np.clip(pts / q[0], dist.a, dist.b)))
        j = int(np.argmax(vals >= 0))
        lo = pts[j - 1] if j > 0 else 0.0
        p = np.array([_bisect_increasing(lambda x: excess(np.array([x]))[0], lo, pts[j])])
    else:
        side = 400
        x, y = np.meshgrid(np.linspace(0.0, top[0], side + 1)[1:], np.linspace(0.0, top[1], side + 1)[1:], indexing="ij")
        # lattice pass: the two preference intervals written out for q1 < q2
        cross = (y - x) / (q[1] - q[0])
        lo1, hi1 = np.maximum(dist.a, x / q[0]), np.minimum(dist.b, cross)
        lo2 = np.clip(np.maximum(cross, y / q[1]), dist.a, dist.b)
        d1 = np.where(hi1 > lo1, dist.cdf(np.clip(hi1, dist.a, dist.b)) - dist.cdf(np.clip(lo1, dist.a, dist.b)), 0.0)
        d2 = 1.0 - dist.cdf(lo2)
        r = np.maximum(np.abs(K[0] * x**e - d1), np.abs(K[1] * y**e - d2))
        i, j = np.unravel_index(np.argmin(r), r.shape)

        def inner(y):
            # group 1 price clearing its own market given the group 2 price
            x = _bisect_increasing(lambda x: excess(np.array([x, y]))[0], 0.0, top[0])
            return np.array([x, y])

        def outer(y):
            return excess(inner(y))[1]

        # bracket the group 2 price around the best lattice cell when signs allow
        ys = np.linspace(0.0, top[1], side + 1)
        lo, hi = ys[j], ys[min(j + 2, side)]
        if not outer(lo) <= 0 <= outer(hi):
            lo, hi = 0.0, top[1]
        p = inner(_bisect_increasing(outer, lo, hi))
    res = excess(p)
    dem = _interval_demand(p, q, dist)
    if np.max(np.abs(res)) > 1e-9 or np.any(dem <= 1e-12):
        raise NotImplementableError(f"no interior equilibrium on grid (residual {np.max(np.abs(res)):.3g})")
    return p


# price model


def bertrand_deviation_check(structure: InformationStructure, market, prices: Sequence[float], eps: float = 1e-6) -> bool:
    """No participating seller gains by moving its price by ``eps``.

    ``prices`` follows the order of ``structure.groups``. Sellers whose block
    cost is at most the group price participate. Under a continuum of sellers,
    raising the price loses every buyer, so the only profitable move left is
    undercutting, which must push the price below the seller's cost. Every
    group must also keep positive demand at the posted prices.
    """
    pop = market.pop
    groups = list(structure.groups)
    if len(prices) != len(groups):
        raise ValidationError(f"expected {len(groups)} prices, got {len(prices)}")
    p = np.asarray(prices, dtype=float)
    q = np.zeros(len(groups))
    for i, g in enumerate(groups):
        part = [b for b in g if market.costs[b] <= p[i]]
        if not part:
            return False
        ids = [a for b in part for a in pop.blocks[b]]
        w = np.array([pop.atoms[a].mass for a in ids])
        q[i] = float(w @ np.array([pop.atoms[a].quality for a in ids]) / w.sum())
        if any(p[i] - eps - market.costs[b] >= 0 for b in part):
            return False
    if np.any(q <= 0):
        return False
    return bool(np.all(_interval_demand(p, q, market.dist) > 0))
