from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qualsel.dist import PiecewisePolyDensity, Uniform
from qualsel.population import SellerPopulation, enumerate_structures
from qualsel.price_model import PriceMarket
from qualsel.quantity_model import QuantityMarket, sorted_groups

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.register_profile("thorough", deadline=None, max_examples=500, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
MARKETS = ROOT / "markets"


def concave_dist() -> PiecewisePolyDensity:
    """Density (8/3) m^-3 on [1, 2]; F(m) m is concave there."""
    return PiecewisePolyDensity((((1.0, 2.0), (("8/3", -3),)),))


def two_atom_quantity_market(mass: float) -> QuantityMarket:
    pop = SellerPopulation.from_blocks([[(0.25, mass)], [(0.75, mass)]])
    return QuantityMarket(Uniform((0.0, 1.0)), pop, 1.0, 1.0)


def interior_point(rng, structure, market):
    """Random prices whose cutoffs sit strictly inside the support, in increasing order."""
    _, q = sorted_groups(structure, market)
    a, b = market.dist.support
    n = len(q)
    while True:
        m = np.sort(rng.uniform(a, b, n))
        if np.all(np.diff(m) > 1e-3 * (b - a)) and m[0] > a + 1e-3 * (b - a):
            break
    return np.cumsum(m * np.diff(np.concatenate([[0.0], q])))


def multi_group_structures(market, rng, n=3):
    out = []
    for s in enumerate_structures(market.pop):
        _, q = sorted_groups(s, market)
        if s.n_groups >= 2 and np.all(np.diff(q) > 1e-6):
            out.append(s)
    if not out:
        return []
    return [out[i] for i in rng.choice(len(out), min(n, len(out)), replace=False)]


@pytest.fixture
def markets_dir() -> Path:
    return MARKETS


@pytest.fixture
def qty_market() -> QuantityMarket:
    return two_atom_quantity_market(2.0)


@pytest.fixture
def qty_market_lowmass() -> QuantityMarket:
    return two_atom_quantity_market(0.5)


@pytest.fixture
def price_uniform() -> PriceMarket:
    pop = SellerPopulation.from_blocks([[(0.25, 0.5)], [(0.75, 0.5)]])
    return PriceMarket(Uniform((0.0, 1.0)), pop, (0.1, 0.5))


@pytest.fixture
def price_concave() -> PriceMarket:
    pop = SellerPopulation.from_blocks([[(0.25, 0.5)], [(0.75, 0.5)]])
    return PriceMarket(concave_dist(), pop, (0.3, 1.05))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
