"""Menus of (price, quality) pairs: demand, revenue and constrained optimisation.

A buyer of type m facing pair (p, q) gets utility m q - p and picks the best
pair on offer, or nothing. Demand for a pair is the buyer mass on the part of
[a, b] where its line lies on the upper envelope; ties go to the higher index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .dist import Convexity, TypeDistribution, classify_Fm_convexity, classify_Fm_convexity_extended
from .errors import ConvexityError, DomainError, ValidationError

DEMAND_EPS = 1e-13  # demand at or below this counts as zero
REVENUE_TIE = 1e-12


@dataclass(frozen=True)
class Menu:
    """Price-quality pairs, kept sorted by price (then quality) with duplicates removed."""

    pairs: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        pairs = [(float(p), float(q)) for p, q in self.pairs]
        bad = [(p, q) for p, q in pairs if not (p > 0 and q > 0 and math.isfinite(p) and math.isfinite(q))]
        if bad:
            raise DomainError(f"menu pairs need positive finite price and quality, got {bad}")
        object.__setattr__(self, "pairs", tuple(sorted(set(pairs))))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def prices(self) -> np.ndarray:
        return np.array([p for p, _ in self.pairs])

    @property
    def qualities(self) -> np.ndarray:
        return np.array([q for _, q in self.pairs])

    @property
    def is_empty(self) -> bool:
        return not self.pairs

    @property
    def top(self) -> tuple[float, float]:
        return self.pairs[-1]

    def subset(self, idx: Iterable[int]) -> "Menu":
        return Menu(tuple(self.pairs[i] for i in idx))

    def __str__(self) -> str:
        return "{" + ", ".join(f"({p:.6g}, {q:.6g})" for p, q in self.pairs) + "}"


@dataclass(frozen=True)
class DemandSplit:
    """Cutoffs m_1 <= ... <= m_{k+1} = b and per-pair demands D_i = F(m_{i+1}) - F(m_i).

    Pairs off the envelope get a zero-width interval placed at the next cutoff.
    """

    menu: Menu
    cutoffs: tuple[float, ...]
    demands: tuple[float, ...]

    @property
    def positive(self) -> tuple[bool, ...]:
        return tuple(d > DEMAND_EPS for d in self.demands)

    @property
    def in_Cp(self) -> bool:
        return len(self.demands) > 0 and all(self.positive)

    @property
    def total(self) -> float:
        return float(sum(self.demands))

    @property
    def intervals(self) -> tuple[tuple[float, float], ...]:
        return tuple(zip(self.cutoffs[:-1], self.cutoffs[1:]))


@dataclass(frozen=True)
class ConstraintSet:
    menus: tuple[Menu, ...]

    def __post_init__(self):
        menus = tuple(m if isinstance(m, Menu) else Menu(tuple(m)) for m in self.menus)
        if not menus:
            raise ValidationError("a constraint set needs at least one menu")
        object.__setattr__(self, "menus", menus)

    def __len__(self) -> int:
        return len(self.menus)

    def __iter__(self):
        return iter(self.menus)

    @classmethod
    def power_set(cls, base: Menu) -> "ConstraintSet":
        n = len(base)
        return cls(tuple(base.subset([i for i in range(n) if mask >> i & 1]) for mask in range(1, 2**n)))


def _owner(m: float, p: np.ndarray, q: np.ndarray) -> int:
    """Index of the chosen pair at type m, or -1 for no purchase; ties go up."""
    u = m * q - p
    best = u.max()
    if best < 0:
        return -1
    return int(np.flatnonzero(u == best)[-1])


def demand_split(menu: Menu, dist: TypeDistribution) -> DemandSplit:
    k = len(menu)
    a, b = dist.support
    if k == 0:
        return DemandSplit(menu, (b,), ())
    p, q = menu.prices, menu.qualities

    # candidate switch points: every pairwise crossing and every zero crossing
    pts = {a, b}
    for i in range(k):
        pts.add(p[i] / q[i])
        for j in range(i + 1, k):
            if q[j] != q[i]:
                pts.add((p[j] - p[i]) / (q[j] - q[i]))
    grid = sorted(x for x in pts if a <= x <= b)

    lower = [math.inf] * k  # left end of each owner's interval
    for lo, hi in zip(grid[:-1], grid[1:]):
        if hi <= lo:
            continue
        j = _owner(0.5 * (lo + hi), p, q)
        if j >= 0:
            lower[j] = min(lower[j], lo)

    cut = [b] * (k + 1)
    for i in range(k - 1, -1, -1):
        cut[i] = lower[i] if lower[i] < math.inf else cut[i + 1]
    F = np.asarray(dist.cdf(np.array(cut)), dtype=float)
    demands = tuple(float(max(F[i + 1] - F[i], 0.0)) for i in range(k))
    return DemandSplit(menu, tuple(float(c) for c in cut), demands)


def menu_revenue(menu: Menu, dist: TypeDistribution) -> float:
    split = demand_split(menu, dist)
    return float(sum(p * d for (p, _), d in zip(menu.pairs, split.demands)))


def Cp_cutoffs(menu: Menu, dist: TypeDistribution, clamp: bool = True) -> np.ndarray:
    """m_i = (p_i - p_{i-1}) / (q_i - q_{i-1}) with p_0 = q_0 = 0; m_1 raised to a if ``clamp``."""
    p = np.concatenate([[0.0], menu.prices])
    q = np.concatenate([[0.0], menu.qualities])
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.diff(p) / np.diff(q)
    if clamp and len(m):
        m[0] = max(dist.a, m[0])
    return m


def revenue_identity(menu: Menu, dist: TypeDistribution) -> float:
    """p_k - sum (p_i - p_{i-1}) F(m_i); equals menu revenue on menus where every pair sells."""
    if not demand_split(menu, dist).in_Cp:
        raise DomainError(f"menu {menu} has a pair with zero demand")
    p = np.concatenate([[0.0], menu.prices])
    F = np.asarray(dist.cdf(Cp_cutoffs(menu, dist)), dtype=float)
    return float(p[-1] - np.sum(np.diff(p) * F))


def monopoly_price(q: float, dist: TypeDistribution, grid: int = 4097, tol: float = 1e-9) -> float:
    """Leftmost maximiser of p (1 - F(p / q))."""
    if not q > 0:
        raise DomainError(f"monopoly_price needs q > 0, got {q}")
    a, b = dist.support
    if classify_Fm_convexity(dist, a, b) is Convexity.STRICTLY_CONVEX:
        # F(x) + x f(x) is strictly increasing here, so the first-order condition has one root
        def foc(x):
            xf = 0.0 if x == 0.0 else x * float(dist.pdf(x))
            return float(dist.cdf(x)) + xf - 1.0

        if foc(a) >= 0:
            return q * a
        return q * optimize.brentq(foc, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def rev(x):
        return x * (1.0 - dist.cdf(x))

    xs = np.linspace(a, b, grid)
    r = rev(xs)
    top = r.max()
    j = int(np.flatnonzero(r >= top - tol * max(1.0, top))[0])
    lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, grid - 1)]
    res = optimize.minimize_scalar(lambda x: -rev(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    x = float(res.x) if -res.fun > r[j] else float(xs[j])
    return q * x


def prune_to_Cp(menu: Menu, dist: TypeDistribution) -> Menu:
    """Drop zero-demand pairs until every remaining pair sells. May return an empty menu."""
    while len(menu):
        split = demand_split(menu, dist)
        keep = [i for i, pos in enumerate(split.positive) if pos]
        if len(keep) == len(menu):
            break
        menu = menu.subset(keep)
    return menu


def n_separating(menu: Menu, dist: TypeDistribution) -> int:
    return len(prune_to_Cp(menu, dist))


@dataclass(frozen=True)
class RegularityReport:
    condition_i: bool
    condition_ii: bool
    witness_i: Menu | None = None
    witness_ii: Menu | None = None
    reason: str = ""
    monopoly_price: float | None = None

    @property
    def regular(self) -> bool:
        return self.condition_i and self.condition_ii


def check_regularity(cs: ConstraintSet, dist: TypeDistribution, tol: float = 1e-9) -> RegularityReport:
    pruned = [prune_to_Cp(m, dist) for m in cs]
    singles = [m.pairs[0] for m in pruned if len(m) == 1]
    if not singles:
        return RegularityReport(False, False, reason="no 1-separating menu in the constraint set")

    cond_i, wit_i = True, None
    for m in pruned:
        if m.is_empty:
            continue
        pk, qk = m.top
        if not any(p >= pk - REVENUE_TIE and q >= qk - REVENUE_TIE for p, q in singles):
            cond_i, wit_i = False, m
            break

    p_hi = max(p for p, _ in singles)
    cond_ii, wit_ii, pM = True, None, None
    for p, q in singles:
        if p < p_hi:
            continue
        pM = monopoly_price(q, dist)
        if p > pM + tol:
            cond_ii, wit_ii = False, Menu(((p, q),))
            break
    reason = "" if cond_i and cond_ii else ("condition (i) fails" if not cond_i else "condition (ii) fails")
    return RegularityReport(cond_i, cond_ii, wit_i, wit_ii, reason, pM)


def _rank_key(menu: Menu, revenue: float):
    return (-revenue, len(menu), tuple(menu.prices))


def co_optimal_menus(cs: ConstraintSet, dist: TypeDistribution, tol: float = REVENUE_TIE) -> list[tuple[Menu, float]]:
    """Every menu whose revenue is within ``tol`` of the best, in tie-break order."""
    scored = [(m, menu_revenue(m, dist)) for m in cs]
    best = max(r for _, r in scored)
    tied = [(m, r) for m, r in scored if r >= best - tol]
    return sorted(tied, key=lambda mr: (len(mr[0]), tuple(mr[0].prices)))


def optimal_menu(cs: ConstraintSet, dist: TypeDistribution) -> tuple[Menu, float]:
    """Exhaustive argmax of revenue; ties go to fewer pairs, then smaller price vectors."""
    return co_optimal_menus(cs, dist)[0]


class SubmenuVerdict(str, Enum):
    SUB_BETTER = "SubBetterByConvexity"
    MENU_BETTER = "MenuBetterByConcavity"
    INDETERMINATE = "Indeterminate"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class SubmenuComparison:
    verdict: SubmenuVerdict
    revenue_menu: float
    revenue_sub: float
    intervals: tuple[tuple[float, float], ...] = ()
    classes: tuple[Convexity, ...] = ()
    keeps_top: bool = True

    @property
    def consistent(self) -> bool:
        """Whether the exact revenues agree with the verdict."""
        if self.verdict is SubmenuVerdict.SUB_BETTER:
            return self.revenue_menu <= self.revenue_sub + REVENUE_TIE
        if self.verdict is SubmenuVerdict.MENU_BETTER:
            return self.revenue_menu >= self.revenue_sub - REVENUE_TIE
        return True


def merged_intervals(menu: Menu, sub: Menu, dist: TypeDistribution) -> list[tuple[float, float]]:
    """Cutoff ranges of the menu collapsed into one pair of ``sub``.

    For each kept pair mu(j) preceded by dropped pairs, the range runs from the
    cutoff of the first dropped pair to the cutoff of mu(j). The first cutoff is
    left unclamped so it may fall below a.
    """
    pos = {pair: i for i, pair in enumerate(menu.pairs)}
    missing = [pair for pair in sub.pairs if pair not in pos]
    if missing:
        raise DomainError(f"pairs {missing} of the submenu are not in the menu")
    mu = [-1] + sorted(pos[pair] for pair in sub.pairs)
    m = Cp_cutoffs(menu, dist, clamp=False)
    return [(float(m[mu[j - 1] + 1]), float(m[mu[j]])) for j in range(1, len(mu)) if mu[j] - mu[j - 1] > 1]


def compare_submenu(menu: Menu, sub: Menu, dist: TypeDistribution) -> SubmenuComparison:
    """Predict the sign of pi(menu) - pi(sub) from the shape of F(m) m on the merged ranges."""
    pos = set(menu.pairs)
    if not set(sub.pairs) <= pos:
        raise DomainError("submenu is not contained in the menu")
    r_menu, r_sub = menu_revenue(menu, dist), menu_revenue(sub, dist)
    full, part = prune_to_Cp(menu, dist), prune_to_Cp(sub, dist)
    if len(full) != len(menu) or len(part) != len(sub) or sub.is_empty:
        return SubmenuComparison(SubmenuVerdict.INDETERMINATE, r_menu, r_sub, keeps_top=False)
    if sub.top != menu.top:
        return SubmenuComparison(SubmenuVerdict.INDETERMINATE, r_menu, r_sub, keeps_top=False)
    intervals = merged_intervals(menu, sub, dist)
    classes = tuple(classify_Fm_convexity_extended(dist, lo, hi) for lo, hi in intervals)
    if not intervals:
        verdict = SubmenuVerdict.INDETERMINATE
    elif all(c.is_convex for c in classes):
        verdict = SubmenuVerdict.SUB_BETTER
    elif all(c is Convexity.CONCAVE for c in classes):
        verdict = SubmenuVerdict.MENU_BETTER
    else:
        verdict = SubmenuVerdict.INDETERMINATE
    return SubmenuComparison(verdict, r_menu, r_sub, tuple(intervals), classes)


@dataclass(frozen=True)
class Counterexample:
    menu: Menu
    revenue: float
    singleton_revenues: tuple[float, float]

    @property
    def margin(self) -> float:
        return self.revenue - max(self.singleton_revenues)


def find_nonconvex_counterexample(
    dist: TypeDistribution,
    step: float = 0.01,
    weights: Sequence[float] = tuple(np.round(np.arange(0.1, 0.91, 0.1), 10)),
    margin: float = 1e-9,
) -> Counterexample | None:
    """Search for a 2-pair menu that beats both of its 1-pair submenus.

    With h(m) = F(m) m, a two-pair menu with cutoffs m1 < m2 and quality
    shares (t, 1 - t) beats its top pair by exactly
    h(t m1 + (1 - t) m2) - t h(m1) - (1 - t) h(m2), and always beats its
    bottom pair. So any chord of h lying below the graph gives a menu.
    ``step`` is the cutoff lattice spacing as a fraction of b - a.
    """
    a, b = dist.support
    if classify_Fm_convexity(dist, a, b).is_convex:
        raise ConvexityError("F(m)m is convex on the support: some 1-separating menu is always optimal")
    n = max(2, int(round(1.0 / step)))
    ms = a + (b - a) * np.arange(n) / n  # stays below b so the top pair sells
    h = ms * np.asarray(dist.cdf(ms), dtype=float)
    cands = []
    for t in weights:
        mid = t * ms[:, None] + (1 - t) * ms[None, :]
        gap = np.asarray(dist.cdf(mid), dtype=float) * mid - t * h[:, None] - (1 - t) * h[None, :]
        gap = np.triu(gap, k=1)
        i, j = np.unravel_index(np.argsort(gap, axis=None)[::-1][:5], gap.shape)
        cands.extend((gap[x, y], ms[x], ms[y], t) for x, y in zip(i, j) if gap[x, y] > 0)
    cands.sort(key=lambda c: -c[0])
    for _, m1, m2, t in cands:
        p1 = m1 * t
        menu = Menu(((p1, t), (p1 + m2 * (1 - t), 1.0)))
        r = menu_revenue(menu, dist)
        singles = tuple(menu_revenue(Menu((pair,)), dist) for pair in menu.pairs)
        if r > max(singles) + margin:
            return Counterexample(menu, r, singles)
    return None


def is_maximal(candidate: tuple[float, float], one_sep_set: Sequence[tuple[float, float]]) -> bool:
    """True iff the candidate beats every other pair on price or on quality."""
    cand = (float(candidate[0]), float(candidate[1]))
    others = [(float(p), float(q)) for p, q in one_sep_set]
    if cand not in others:
        raise DomainError(f"candidate {cand} is not in the set")
    return all(cand[0] > p or cand[1] > q for p, q in others if (p, q) != cand)
