"""Price model: sellers set prices and compete a la Bertrand inside each group.

Costs are constant on each block and increase with the block index. Within a
group, competition drives the price down to the cost of the cheapest block G,
and only G's sellers stay in the market, so the group shows buyers the pair
(c(G), E[X | G]). Equilibria are read off this map directly; nothing is
simulated here.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .dist import Convexity, TypeDistribution, classify_Fm_convexity, classify_Fm_convexity_extended
from .errors import DomainError, NotImplementableError, ValidationError
from .population import DEFAULT_CAP, InformationStructure, SellerPopulation, conditional_mean, enumerate_structures
from .pricedisc import DEMAND_EPS, ConstraintSet, Menu, demand_split, menu_revenue


@dataclass(frozen=True)
class PriceMarket:
    dist: TypeDistribution
    pop: SellerPopulation
    costs: tuple[float, ...]

    def __post_init__(self):
        costs = tuple(float(c) for c in self.costs)
        object.__setattr__(self, "costs", costs)
        problems = []
        if len(costs) != self.pop.n_blocks:
            problems.append(f"costs has {len(costs)} entries, expected one per block ({self.pop.n_blocks})")
        problems += [f"costs[{i}] = {c} must be > 0" for i, c in enumerate(costs) if not (c > 0 and math.isfinite(c))]
        problems += [
            f"costs must strictly increase with the block index: costs[{i}] = {costs[i]} >= costs[{i + 1}] = {costs[i + 1]}"
            for i in range(len(costs) - 1)
            if not costs[i] < costs[i + 1]
        ]
        if problems:
            raise ValidationError(problems)

    def block_quality(self, b: int) -> float:
        return conditional_mean(self.pop, self.pop.blocks[b])

    @property
    def full_disclosure_menu(self) -> Menu:
        return Menu(tuple((self.costs[b], self.block_quality(b)) for b in range(self.pop.n_blocks)))


def lowest_cost_blocks(structure: InformationStructure, market: PriceMarket) -> list[int]:
    """Cheapest block of every group, in increasing cost order."""
    structure.check_against(market.pop)
    return sorted(min(g) for g in structure.groups)


@dataclass(frozen=True)
class BertrandOutcome:
    structure: InformationStructure
    groups: tuple[frozenset[int], ...]
    participants: tuple[int, ...]
    prices: tuple[float, ...]
    qualities: tuple[float, ...]
    demands: tuple[float, ...]
    cutoffs: tuple[float, ...]

    @property
    def menu(self) -> Menu:
        return Menu(tuple(zip(self.prices, self.qualities)))

    @property
    def implementable(self) -> bool:
        return all(d > DEMAND_EPS for d in self.demands)

    @property
    def revenue(self) -> float:
        return float(sum(p * d for p, d in zip(self.prices, self.demands))) if self.implementable else 0.0

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def pruned_hint(self) -> InformationStructure | None:
        """The structure left after dropping groups that sell nothing, if that differs."""
        keep = [g for g, d in zip(self.groups, self.demands) if d > DEMAND_EPS]
        if len(keep) == len(self.groups) or not keep:
            return None
        return InformationStructure(tuple(keep))


def bertrand_menu(structure: InformationStructure, market: PriceMarket) -> BertrandOutcome:
    G = lowest_cost_blocks(structure, market)
    by_G = {min(g): g for g in structure.groups}
    groups = tuple(by_G[b] for b in G)
    prices = tuple(market.costs[b] for b in G)
    quals = tuple(market.block_quality(b) for b in G)
    # costs strictly increase, so listing groups by G already sorts by price
    split = demand_split(Menu(tuple(zip(prices, quals))), market.dist) if min(quals) > 0 else None
    if split is None:
        demands = tuple(0.0 if q <= 0 else math.nan for q in quals)
        return BertrandOutcome(structure, groups, tuple(G), prices, quals, demands, ())
    return BertrandOutcome(structure, groups, tuple(G), prices, quals, split.demands, split.cutoffs)


def is_implementable(structure: InformationStructure, market: PriceMarket) -> tuple[bool, tuple[float, ...]]:
    out = bertrand_menu(structure, market)
    return out.implementable, out.demands


def constraint_set(market: PriceMarket, cap: int = DEFAULT_CAP) -> ConstraintSet:
    """All menus the price model can induce.

    When full disclosure is implementable this is every nonempty submenu of the
    full-disclosure menu; otherwise the menus of all implementable structures.
    """
    full = InformationStructure.full_disclosure(market.pop.n_blocks)
    if bertrand_menu(full, market).implementable:
        return ConstraintSet.power_set(market.full_disclosure_menu)
    menus = []
    for s in enumerate_structures(market.pop, cap):
        out = bertrand_menu(s, market)
        if out.implementable and out.menu not in menus:
            menus.append(out.menu)
    return ConstraintSet(tuple(menus))


def _outcome(args):
    s, market = args
    return bertrand_menu(s, market)


@dataclass(frozen=True)
class PriceSearchReport:
    winner: BertrandOutcome
    table: tuple[BertrandOutcome, ...]
    convex: bool
    best_1_separating: float
    n_blocks: int

    @property
    def revenue(self) -> float:
        return self.winner.revenue

    @property
    def winner_is_1_separating(self) -> bool:
        return self.winner.n_groups == 1

    @property
    def winner_is_full_disclosure(self) -> bool:
        return self.winner.structure == InformationStructure.full_disclosure(self.n_blocks)

    @property
    def winner_is_top_block(self) -> bool:
        return self.winner.structure.groups == (frozenset([self.n_blocks - 1]),)

    @property
    def prediction_holds(self) -> bool | None:
        """Under convex F(m)m some single group must reach the best revenue."""
        if not self.convex:
            return None
        return self.best_1_separating >= self.revenue - 1e-12


def search_optimal_structure(market: PriceMarket, cap: int = DEFAULT_CAP, jobs: int = 1) -> PriceSearchReport:
    structures = enumerate_structures(market.pop, cap)
    work = [(s, market) for s in structures]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            table = list(ex.map(_outcome, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        table = [_outcome(w) for w in work]
    ok = [o for o in table if o.implementable]
    if not ok:
        raise NotImplementableError("no information structure is implementable")
    best = max(o.revenue for o in ok)
    winner = next(o for o in sorted(ok, key=lambda o: o.n_groups) if o.revenue >= best - 1e-12)
    a, b = market.dist.support
    convex = classify_Fm_convexity(market.dist, a, b).is_convex
    best1 = max((o.revenue for o in ok if o.n_groups == 1), default=0.0)
    return PriceSearchReport(winner, tuple(table), convex, best1, market.pop.n_blocks)


class RuleVerdict(str, Enum):
    DROP = "DropLowest"
    KEEP = "Keep"
    FULL_DISCLOSURE = "FullDisclosureOptimal"
    INDETERMINATE = "Indeterminate"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RuleReport:
    verdict: RuleVerdict
    interval: tuple[float, float]
    convexity: Convexity
    revenue_kept: float
    revenue_alternative: float

    @property
    def consistent(self) -> bool:
        """Exact revenues agree with the verdict (Indeterminate always agrees)."""
        if self.verdict is RuleVerdict.DROP:
            return self.revenue_alternative >= self.revenue_kept - 1e-12
        if self.verdict in (RuleVerdict.KEEP, RuleVerdict.FULL_DISCLOSURE):
            return self.revenue_kept >= self.revenue_alternative - 1e-12
        return True


def _first_interval(prices: Sequence[float], quals: Sequence[float], lo: int, hi: int) -> tuple[float, float]:
    p0, q0 = (0.0, 0.0) if lo == 0 else (prices[lo - 1], quals[lo - 1])
    left = (prices[lo] - p0) / (quals[lo] - q0)
    if quals[hi] == quals[hi - 1]:
        raise DomainError(f"pairs {hi} and {hi + 1} share the quality {quals[hi]}")
    right = (prices[hi] - prices[hi - 1]) / (quals[hi] - quals[hi - 1])
    return float(left), float(right)


def local_drop_rule(structure: InformationStructure, market: PriceMarket) -> RuleReport:
    """Whether dropping the cheapest group helps, from the shape of F(m) m near the bottom."""
    out = bertrand_menu(structure, market)
    if out.n_groups < 2:
        raise DomainError("the drop rule needs at least two groups")
    if not out.implementable:
        raise DomainError(f"structure {structure} is not implementable")
    p, q = out.prices, out.qualities
    interval = _first_interval(p, q, 0, 1)
    cls = classify_Fm_convexity_extended(market.dist, *interval)
    verdict = RuleVerdict.DROP if cls.is_convex else RuleVerdict.KEEP if cls is Convexity.CONCAVE else RuleVerdict.INDETERMINATE
    rest = bertrand_menu(InformationStructure(out.groups[1:]), market)
    return RuleReport(verdict, interval, cls, out.revenue, rest.revenue)


def full_disclosure_rule(market: PriceMarket) -> RuleReport:
    """Certify full disclosure when F(m) m is concave across the full-disclosure cutoffs."""
    l = market.pop.n_blocks
    full = bertrand_menu(InformationStructure.full_disclosure(l), market)
    if not full.implementable:
        raise DomainError("full disclosure is not implementable")
    if l < 2:
        raise DomainError("the full-disclosure rule needs at least two blocks")
    p, q = full.prices, full.qualities
    left = p[0] / q[0]
    if q[-1] == q[-2]:
        raise DomainError("the two top blocks share a quality")
    right = (p[-1] - p[-2]) / (q[-1] - q[-2])
    cls = classify_Fm_convexity_extended(market.dist, left, right)
    verdict = RuleVerdict.FULL_DISCLOSURE if cls is Convexity.CONCAVE else RuleVerdict.INDETERMINATE
    best_sub = max(menu_revenue(m, market.dist) for m in ConstraintSet.power_set(full.menu) if len(m) < l)
    return RuleReport(verdict, (float(left), float(right)), cls, full.revenue, best_sub)
