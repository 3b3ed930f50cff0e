"""Random markets and menus for property tests and experiment scripts."""

from __future__ import annotations

import numpy as np

from .dist import Beta, Convexity, ParetoTruncated, Power, TypeDistribution, Uniform, classify_Fm_convexity
from .population import Atom, InformationStructure, SellerPopulation
from .price_model import PriceMarket, bertrand_menu
from .pricedisc import Menu
from .quantity_model import QuantityMarket, check_supply_condition


def random_distribution(rng: np.random.Generator, family: str | None = None) -> TypeDistribution:
    family = family or rng.choice(["Uniform", "Power", "Beta", "ParetoTruncated"])
    a = float(rng.choice([0.0, rng.uniform(0.1, 1.0)]))
    b = a + float(rng.uniform(0.5, 3.0))
    if family == "Uniform":
        return Uniform((a, b))
    if family == "Power":
        lo = -3.5 if a > 0 else -0.9
        return Power((a, b), float(rng.uniform(lo, 3.0)))
    if family == "Beta":
        return Beta((a, b), float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.5, 4.0)))
    a = max(a, 0.5)
    return ParetoTruncated((a, a + float(rng.uniform(0.5, 4.0))), float(rng.uniform(0.2, 3.0)))


def random_convex_distribution(rng: np.random.Generator) -> TypeDistribution:
    """Uniform or Power law with F(m) m strictly convex on the support."""
    a = float(rng.choice([0.0, rng.uniform(0.05, 0.5)]))
    b = a + float(rng.uniform(0.5, 2.0))
    if rng.random() < 0.5:
        return Uniform((a, b))
    lo = -1.9 if a > 0 else -0.9
    return Power((a, b), float(rng.uniform(lo, 2.0)))


def random_population(rng: np.random.Generator, n_blocks: int, n_atoms: int) -> SellerPopulation:
    """Blocks of contiguous quality ranges, each holding at least one atom."""
    n_atoms = max(n_atoms, n_blocks)
    sizes = np.ones(n_blocks, dtype=int)
    for j in rng.integers(0, n_blocks, n_atoms - n_blocks):
        sizes[j] += 1
    qualities = np.sort(rng.uniform(0.05, 1.0, n_atoms))
    atoms = [Atom(float(x), float(rng.uniform(0.2, 2.0))) for x in qualities]
    blocks, start = [], 0
    for s in sizes:
        blocks.append(tuple(range(start, start + s)))
        start += s
    return SellerPopulation(tuple(atoms), tuple(blocks), 1.0)


def random_quantity_market(
    rng: np.random.Generator,
    blocks: tuple[int, int] = (2, 4),
    atoms: tuple[int, int] = (2, 8),
    dist: TypeDistribution | None = None,
) -> QuantityMarket:
    l = int(rng.integers(blocks[0], blocks[1] + 1))
    n = int(rng.integers(max(l, atoms[0]), atoms[1] + 1))
    pop = random_population(rng, l, n)
    dist = dist or random_convex_distribution(rng)
    k = tuple(float(v) for v in rng.uniform(0.2, 3.0, n))
    return QuantityMarket(dist, pop, k, float(rng.uniform(0.5, 2.5)))


def regular_quantity_market(rng: np.random.Generator, tries: int = 200, **kw) -> QuantityMarket:
    """Market with strictly convex F(m) m where the supply condition holds.

    Supply at the monopoly price grows as costs fall, so costs are scaled down
    until the condition holds.
    """
    for _ in range(tries):
        m = random_quantity_market(rng, **kw)
        a, b = m.dist.support
        if classify_Fm_convexity(m.dist, a, b) is not Convexity.STRICTLY_CONVEX:
            continue
        for _ in range(8):
            if check_supply_condition(m).holds:
                return m
            m = QuantityMarket(m.dist, m.pop, tuple(v / 4.0 for v in m.k), m.alpha)
    raise RuntimeError("could not draw a regular market")


def random_Cp_menu(rng: np.random.Generator, dist: TypeDistribution, k: int, below_a: float = 0.2) -> Menu:
    """Menu in which every pair sells: increasing qualities and increasing cutoffs inside the support.

    With probability ``below_a`` (and a > 0) the first price-to-quality ratio
    is drawn below a, so the lowest pair serves every type up to m_2.
    """
    a, b = dist.support
    while True:
        m = np.sort(rng.uniform(a, b, k))
        if np.all(np.diff(m) > 1e-3 * (b - a)) and m[0] > a and b - m[-1] > 1e-3 * (b - a):
            break
    if a > 0 and rng.random() < below_a:
        m[0] = rng.uniform(0.0, a)
    dq = rng.uniform(0.05, 1.0, k)
    q = np.cumsum(dq)
    p = np.cumsum(m * dq)
    return Menu(tuple(zip(p.tolist(), q.tolist())))


def random_price_market(
    rng: np.random.Generator, l: int, dist: TypeDistribution | None = None, tries: int = 1000
) -> PriceMarket:
    """Price-model market whose full-disclosure structure is implementable."""
    dist = dist or random_distribution(rng)
    for _ in range(tries):
        menu = random_Cp_menu(rng, dist, l, below_a=0.0)
        blocks = []
        for p, q in menu.pairs:
            spread = float(rng.uniform(0.0, 0.5)) * q
            n = int(rng.integers(1, 4))
            xs = q + spread * np.linspace(-1.0, 1.0, n)
            blocks.append([(float(x), 1.0) for x in xs])
        pop = SellerPopulation.from_blocks(blocks)
        mkt = PriceMarket(dist, pop, menu.prices)
        if bertrand_menu(InformationStructure.full_disclosure(l), mkt).implementable:
            return mkt
    raise RuntimeError("could not draw an implementable price market")
