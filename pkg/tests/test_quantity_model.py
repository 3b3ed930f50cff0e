from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qualsel.dist import Uniform
from qualsel.errors import DomainError, NotImplementableError, ValidationError
from qualsel.generators import random_distribution, random_quantity_market, regular_quantity_market
from qualsel.oracle import OracleConfig, grid_equilibrium
from qualsel.population import InformationStructure, SellerPopulation, enumerate_structures
from qualsel.quantity_model import (
    QuantityMarket,
    check_supply_condition,
    excess_supply,
    expected_quality,
    induced_menu,
    optimal_quantity,
    psi,
    search_optimal_structure,
    solve_equilibrium,
    supply,
    supply_weight,
)

from .conftest import interior_point, multi_group_structures

U = Uniform((0.0, 1.0))
S = InformationStructure.parse
seeds = st.integers(0, 2**32 - 1)


def single_atom_market(k, alpha, quality=0.5, mass=1.0):
    return QuantityMarket(U, SellerPopulation.from_blocks([[(quality, mass)]]), k, alpha)


@pytest.mark.parametrize(
    "k, alpha, p, g",
    [(1.0, 1.0, 0.5, 0.5), (4.0, 1.0, 1.0, 0.25), (1.0, 2.0, 8.0, 2.8284271247461903)],
)
def test_optimal_quantity_examples(k, alpha, p, g):
    assert optimal_quantity(0, p, single_atom_market(k, alpha)) == pytest.approx(g, rel=1e-14)


def test_optimal_quantity_matches_profit_grid():
    # argmax_h h p - k h^(alpha+1) / (alpha+1) on a dense lattice
    market = single_atom_market(1.0, 2.0)
    h = np.linspace(0.0, 5.0, 5_000_001)
    assert optimal_quantity(0, 8.0, market) == pytest.approx(h[np.argmax(8.0 * h - h**3 / 3.0)], abs=2e-6)


def test_optimal_quantity_rejects_nonpositive_price():
    with pytest.raises(DomainError):
        optimal_quantity(0, 0.0, single_atom_market(1.0, 1.0))
    with pytest.raises(DomainError):
        supply(frozenset({0}), -1.0, single_atom_market(1.0, 1.0))


def test_expected_quality_examples():
    pop = SellerPopulation.from_blocks([[(0.25, 0.5), (0.75, 0.5)]])
    assert expected_quality(frozenset({0}), QuantityMarket(U, pop, 1.0, 1.0)) == pytest.approx(0.5)
    pop = SellerPopulation.from_blocks([[(0.75, 2.0)]])
    assert expected_quality(frozenset({0}), QuantityMarket(U, pop, 1.0, 1.0)) == pytest.approx(0.75)
    pop = SellerPopulation.from_blocks([[(0.2, 1.0), (0.8, 1.0)]])
    assert expected_quality(frozenset({0}), QuantityMarket(U, pop, (1.0, 4.0), 1.0)) == pytest.approx(0.32)


def test_supply_examples(qty_market):
    assert supply(frozenset({1}), 0.3, qty_market) == pytest.approx(0.6)
    pop = SellerPopulation.from_blocks([[(0.25, 0.5), (0.75, 0.5)]])
    assert supply(frozenset({0}), 6 / 11, QuantityMarket(U, pop, 1.0, 1.0)) == pytest.approx(6 / 11)
    assert supply(frozenset({0}), 2.0, single_atom_market(8.0, 2.0)) == pytest.approx(0.5)


def test_market_validation():
    pop = SellerPopulation.from_blocks([[(0.25, 1.0)], [(0.75, 1.0)]])
    with pytest.raises(ValidationError) as exc:
        QuantityMarket(U, pop, (1.0, -1.0, 2.0), 0.0)
    text = str(exc.value)
    assert "one per atom" in text and "k[1]" in text and "alpha" in text


def test_excess_supply_single_group():
    market = single_atom_market(1.0, 1.0, quality=0.5, mass=2.0)
    for p in (0.1, 0.2, 0.4):
        assert excess_supply([p], S("{A1}"), market)[0] == pytest.approx(2.0 * p - (1.0 - p / 0.5))


def test_excess_supply_vanishes_at_two_group_equilibrium(qty_market):
    assert np.allclose(excess_supply([1 / 14, 2 / 7], S("{A1}|{A2}"), qty_market), 0.0, atol=1e-15)


def test_psi_domain_errors(qty_market):
    s = S("{A1}|{A2}")
    with pytest.raises(DomainError, match="increase"):
        psi([0.3, 0.2], s, qty_market)
    with pytest.raises(DomainError, match="> 0"):
        psi([0.0, 0.2], s, qty_market)
    with pytest.raises(DomainError, match="exceeds b"):
        psi([0.1, 0.9], s, qty_market)
    with pytest.raises(DomainError, match="expected 2 prices"):
        psi([0.1], s, qty_market)


# frozen values: hand-solved linear clearing systems (Uniform[0,1], k = alpha = 1)


@pytest.mark.parametrize(
    "text, prices, demands",
    [
        ("{A2}", (0.3,), (0.6,)),
        ("{A1}|{A2}", (1 / 14, 2 / 7), (1 / 7, 4 / 7)),
        ("{A1,A2}", (1 / 6,), (2 / 3,)),
        ("{A1}", (1 / 6,), (1 / 3,)),
    ],
)
def test_example_market_equilibria(qty_market, text, prices, demands):
    res = solve_equilibrium(S(text), qty_market)
    assert res.implementable
    assert res.prices == pytest.approx(prices, abs=1e-12)
    assert res.demands == pytest.approx(demands, abs=1e-12)
    assert res.supplies == pytest.approx(demands, abs=1e-12)
    assert res.clearing_residual < 1e-12


def test_induced_menu(qty_market):
    assert induced_menu(S("{A2}"), qty_market).pairs[0] == pytest.approx((0.3, 0.75))
    menu = induced_menu(S("{A1}|{A2}"), qty_market)
    assert np.allclose(np.array(menu.pairs), [[1 / 14, 0.25], [2 / 7, 0.75]], atol=1e-12)


def test_equal_quality_groups_rejected():
    pop = SellerPopulation.from_blocks([[(0.5, 1.0)], [(0.5, 2.0)]])
    market = QuantityMarket(U, pop, 1.0, 1.0)
    res = solve_equilibrium(S("{A1}|{A2}"), market)
    assert not res.implementable and "equal expected quality" in res.diagnostic
    with pytest.raises(NotImplementableError):
        induced_menu(S("{A1}|{A2}"), market)


def test_boundary_collapse_is_reported():
    # the high group floods the market so cheaply that every buyer type prefers it
    pop = SellerPopulation.from_blocks([[(0.2, 1.0)], [(0.8, 5.0)]])
    market = QuantityMarket(Uniform((0.5, 1.5)), pop, 1.0, 1.0)
    res = solve_equilibrium(S("{A1}|{A2}"), market)
    assert not res.implementable
    assert res.prices[0] == 0.0 and res.demands[0] == 0.0
    assert res.prices[1] == pytest.approx(0.2)
    assert "boundary collapse" in res.diagnostic
    with pytest.raises(NotImplementableError, match="not implementable"):
        induced_menu(S("{A1}|{A2}"), market)


def test_supply_condition_examples(qty_market, qty_market_lowmass):
    rep = check_supply_condition(qty_market)
    assert rep.B_H == 1 and rep.holds
    assert rep.p_eq == pytest.approx(0.3) and rep.p_M == pytest.approx(0.375)
    assert rep.closed_form_sum == pytest.approx(1.5) and rep.consistent

    rep = check_supply_condition(qty_market_lowmass)
    assert rep.B_H == 1 and not rep.holds
    assert rep.p_eq == pytest.approx(6 / 11, abs=1e-12)
    assert rep.closed_form_sum == pytest.approx(0.375) and rep.consistent

    assert check_supply_condition(single_atom_market(0.01, 1.0)).holds


def test_search_example_market(qty_market):
    rep = search_optimal_structure(qty_market)
    revs = {str(r.structure): r.revenue for r in rep.table}
    assert revs["{A2}"] == pytest.approx(0.18, abs=1e-12)
    assert revs["{A1,A2}"] == pytest.approx(1 / 9, abs=1e-12)
    assert revs["{A1}"] == pytest.approx(1 / 18, abs=1e-12)
    assert revs["{A1}|{A2}"] == pytest.approx(17 / 98, abs=1e-12)
    assert str(rep.winner.structure) == "{A2}"
    assert rep.winner_is_1_separating and rep.winner_block_in_Io and rep.winner_maximal
    assert rep.regular_case_applies and rep.prediction_holds


def test_search_lowmass_market(qty_market_lowmass):
    rep = search_optimal_structure(qty_market_lowmass)
    assert not rep.regular_case_applies
    assert str(rep.winner.structure) == "{A1}|{A2}"
    assert rep.revenue == pytest.approx(370 / 2401, abs=1e-12)


def test_search_single_block():
    rep = search_optimal_structure(single_atom_market(1.0, 1.0))
    assert len(rep.table) == 1 and rep.winner is rep.table[0]


def test_parallel_search_matches_serial(qty_market):
    a = search_optimal_structure(qty_market, jobs=1)
    b = search_optimal_structure(qty_market, jobs=2)
    assert [r.prices for r in a.table] == [r.prices for r in b.table]


# properties


@given(seed=seeds)
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    market = random_quantity_market(rng, dist=random_distribution(rng))
    for s in multi_group_structures(market, rng, 2):
        for _ in range(20):
            p = interior_point(rng, s, market)
            g = excess_supply(p, s, market)
            h = 1e-6 * np.min(np.diff(np.concatenate([[0.0], p])))
            fd = np.array([(psi(p + h * e, s, market) - psi(p - h * e, s, market)) / (2 * h) for e in np.eye(len(p))])
            assert np.max(np.abs(fd - g)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


@given(seed=seeds)
def test_excess_supply_strictly_monotone(seed):
    rng = np.random.default_rng(seed)
    market = random_quantity_market(rng, dist=random_distribution(rng))
    for s in multi_group_structures(market, rng, 2):
        for _ in range(20):
            p, r = interior_point(rng, s, market), interior_point(rng, s, market)
            gap = (excess_supply(p, s, market) - excess_supply(r, s, market)) @ (p - r)
            assert gap > 0


@given(seed=seeds)
def test_equilibrium_clears_and_is_unique(seed):
    rng = np.random.default_rng(seed)
    market = random_quantity_market(rng, dist=random_distribution(rng))
    for s in multi_group_structures(market, rng, 3):
        res = solve_equilibrium(s, market)
        if not res.implementable:
            continue
        assert res.clearing_residual < 1e-8
        assert all(d > 0 for d in res.demands)
        assert np.all(np.diff(res.prices) > 0)
        for _ in range(10):
            again = solve_equilibrium(s, market, init=interior_point(rng, s, market))
            assert again.implementable
            assert np.max(np.abs(np.array(again.prices) - res.prices)) < 1e-7


@given(seed=seeds)
def test_expected_quality_ignores_price(seed):
    rng = np.random.default_rng(seed)
    market = random_quantity_market(rng)
    for s in enumerate_structures(market.pop)[:6]:
        for g in s.groups:
            ids = market.pop.atoms_of(g)
            ref = expected_quality(g, market)
            for p in rng.uniform(0.01, 5.0, 10):
                h = np.array([optimal_quantity(i, p, market) * market.pop.atoms[i].mass for i in ids])
                x = np.array([market.pop.atoms[i].quality for i in ids])
                assert float(h @ x / h.sum()) == pytest.approx(ref, rel=1e-12)


@given(seed=seeds)
def test_singleton_excess_supply_changes_sign_at_equilibrium(seed):
    rng = np.random.default_rng(seed)
    market = random_quantity_market(rng, dist=random_distribution(rng))
    s = InformationStructure((frozenset({int(rng.integers(market.pop.n_blocks))}),))
    p = solve_equilibrium(s, market).prices[0]
    q = expected_quality(s.groups[0], market)
    top = q * market.dist.b
    below = rng.uniform(0.0, p, 20)
    above = rng.uniform(p, top, 20)
    below, above = below[below > 0], above[above < top]
    assert all(excess_supply([x], s, market)[0] <= 0 for x in below)
    assert all(excess_supply([x], s, market)[0] >= 0 for x in above)


@settings(max_examples=25)
@given(seed=seeds)
def test_newton_agrees_with_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    market = random_quantity_market(rng, blocks=(2, 3), atoms=(2, 5), dist=random_distribution(rng))
    two = [s for s in enumerate_structures(market.pop) if s.n_groups == 2]
    s = two[int(rng.integers(len(two)))]
    res = solve_equilibrium(s, market)
    try:
        grid = grid_equilibrium(s, market, OracleConfig())
    except NotImplementableError:
        assert not res.implementable
        return
    assert res.implementable
    assert np.max(np.abs(grid - np.array(res.prices))) < 1e-7


def test_regular_markets_pick_a_single_block():
    rng = np.random.default_rng(11)
    for _ in range(10):
        rep = search_optimal_structure(regular_quantity_market(rng))
        assert rep.regular_case_applies
        assert rep.prediction_holds, str(rep.winner.structure)


def test_supply_weight_is_sum_over_atoms(qty_market):
    assert supply_weight(frozenset({0, 1}), qty_market) == pytest.approx(4.0)
