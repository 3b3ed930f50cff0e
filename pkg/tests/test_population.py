from __future__ import annotations

import math

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from qualsel.errors import CapExceededError, EmptySupportError, ValidationError
from qualsel.population import (
    Atom,
    InformationStructure,
    SellerPopulation,
    bell,
    conditional_mean,
    enumerate_structures,
    iter_structures,
    structure_count,
)


def test_bell_numbers_match_sympy():
    assert [bell(n) for n in range(12)] == [int(sympy.bell(n)) for n in range(12)]


@pytest.mark.parametrize("l", range(1, 9))
def test_structure_count_formula(l):
    # one structure per nonempty set of kept blocks and partition of it
    direct = sum(math.comb(l, k) * int(sympy.bell(k)) for k in range(1, l + 1))
    assert structure_count(l) == direct == int(sympy.bell(l + 1)) - 1


@pytest.mark.parametrize("l", range(1, 6))
def test_enumeration_exhaustive(l):
    out = enumerate_structures(l)
    assert len(out) == structure_count(l)
    keys = {tuple(sorted(tuple(sorted(g)) for g in s.groups)) for s in out}
    assert len(keys) == len(out)
    for s in out:
        blocks = [b for g in s.groups for b in g]
        assert len(blocks) == len(set(blocks))
        assert all(0 <= b < l for b in blocks)
        assert all(g for g in s.groups)


def test_enumeration_order_two_blocks():
    assert [str(s) for s in enumerate_structures(2)] == ["{A1}", "{A2}", "{A1}|{A2}", "{A1,A2}"]


def test_iter_structures_is_lazy():
    it = iter_structures(12)
    first = next(it)
    assert str(first) == "{A1}"


def test_cap_exceeded():
    with pytest.raises(CapExceededError) as exc:
        enumerate_structures(11)
    assert exc.value.blocks == 11 and exc.value.cap == 10
    assert len(enumerate_structures(3, cap=3)) == 14


def test_population_validation_is_aggregated():
    with pytest.raises(ValidationError) as exc:
        SellerPopulation((Atom(0.2, 1.0), Atom(0.5, -1.0)), ((0, 5), ()))
    text = str(exc.value)
    assert "mass" in text and "atom index 5" in text and "blocks[1] is empty" in text and "atoms [1]" in text


def test_population_rejects_shared_atoms():
    with pytest.raises(ValidationError, match="appears in"):
        SellerPopulation((Atom(0.2, 1.0), Atom(0.5, 1.0)), ((0, 1), (1,)))


def test_from_blocks_and_means():
    pop = SellerPopulation.from_blocks([[(0.2, 1.0), (0.4, 3.0)], [(0.9, 2.0)]])
    assert pop.n_blocks == 2
    assert pop.block_mass(0) == pytest.approx(4.0)
    assert pop.block_mean(0) == pytest.approx(0.35)
    assert conditional_mean(pop, pop.atoms_of([0, 1])) == pytest.approx((0.2 + 1.2 + 1.8) / 6.0)
    w = np.array([1.0, 0.0, 1.0])
    assert conditional_mean(pop, [0, 1, 2], w) == pytest.approx((0.2 + 1.8) / 3.0)


def test_conditional_mean_empty():
    pop = SellerPopulation.from_blocks([[(0.2, 1.0)]])
    with pytest.raises(EmptySupportError):
        conditional_mean(pop, [])
    with pytest.raises(EmptySupportError):
        conditional_mean(pop, [0], np.zeros(1))


def test_structure_validation():
    with pytest.raises(ValidationError):
        InformationStructure(())
    with pytest.raises(ValidationError, match="more than one group"):
        InformationStructure((frozenset({0, 1}), frozenset({1})))
    pop = SellerPopulation.from_blocks([[(0.2, 1.0)], [(0.5, 1.0)]])
    with pytest.raises(ValidationError, match="A3"):
        InformationStructure.parse("{A3}").check_against(pop)


def test_parse_and_render():
    s = InformationStructure.parse("{A3}|{A2,A1}")
    assert str(s) == "{A1,A2}|{A3}"
    assert s.n_groups == 2
    assert s.blocks == frozenset({0, 1, 2})
    with pytest.raises(ValidationError):
        InformationStructure.parse("A1,A2")
    with pytest.raises(ValidationError):
        InformationStructure.parse("{B1}")


def test_full_disclosure():
    pop = SellerPopulation.from_blocks([[(0.2, 1.0)], [(0.5, 1.0)], [(0.7, 1.0)]])
    assert InformationStructure.full_disclosure(3).is_full_disclosure(pop)
    assert not InformationStructure.parse("{A1}|{A2}").is_full_disclosure(pop)
    assert not InformationStructure.parse("{A1,A2}|{A3}").is_full_disclosure(pop)


@given(st.integers(1, 6), st.data())
def test_render_parse_round_trip(l, data):
    structures = enumerate_structures(l)
    s = data.draw(st.sampled_from(structures))
    assert InformationStructure.parse(str(s)) == s
