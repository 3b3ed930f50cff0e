"""Quantity model: the platform posts one price per group and sellers pick quantities.

A seller of quality x facing price p supplies g = (p / k(x))**(1/alpha). Group
supply is therefore p**(1/alpha) K with K = sum k**(-1/alpha) mass, and the
buyers see the quantity-weighted mean quality, which does not depend on p.

Equilibrium prices minimise the convex potential

    psi(p) = sum K_i p_i**((a+1)/a) / (1 + 1/a) - p_n + sum F2(m_i) dq_i,

whose gradient is excess supply. F2 is continued past the support (0 below a,
slope 1 above b), which keeps psi convex on the closed positive orthant and
smooth inside it, so the cutoffs never have to be kept in order explicitly. psi has a
unique minimiser over p >= 0; an interior equilibrium exists exactly when
that minimiser has positive prices and every group sells.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .dist import Convexity, TypeDistribution, classify_Fm_convexity
from .errors import ConvergenceError, DomainError, NotImplementableError, ValidationError
from .population import DEFAULT_CAP, InformationStructure, SellerPopulation, conditional_mean, enumerate_structures
from .pricedisc import Menu, demand_split, is_maximal, monopoly_price

GRAD_TOL = 1e-10
DEMAND_MIN = 1e-12
QUALITY_TIE = 1e-12


@dataclass(frozen=True)
class QuantityMarket:
    dist: TypeDistribution
    pop: SellerPopulation
    k: tuple[float, ...]
    alpha: float = 1.0

    def __post_init__(self):
        k = self.k
        if np.ndim(k) == 0:
            k = (float(k),) * len(self.pop.atoms)
        k = tuple(float(v) for v in k)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "alpha", float(self.alpha))
        problems = []
        if len(k) != len(self.pop.atoms):
            problems.append(f"k has {len(k)} entries, expected one per atom ({len(self.pop.atoms)})")
        problems += [f"k[{i}] = {v} must be > 0" for i, v in enumerate(k) if not (v > 0 and math.isfinite(v))]
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            problems.append(f"alpha = {self.alpha} must be > 0")
        if problems:
            raise ValidationError(problems)

    @property
    def weights(self) -> np.ndarray:
        """Per-atom supply weight k**(-1/alpha)."""
        return np.asarray(self.k) ** (-1.0 / self.alpha)


def optimal_quantity(atom: int, p: float, market: QuantityMarket) -> float:
    """Profit-maximising quantity (p / k)**(1/alpha) of one seller of the given atom."""
    if not p > 0:
        raise DomainError(f"price must be > 0, got {p}")
    return (p / market.k[atom]) ** (1.0 / market.alpha)


def _group_atoms(group, market: QuantityMarket) -> list[int]:
    return market.pop.atoms_of(group)


def expected_quality(group, market: QuantityMarket) -> float:
    """Quantity-weighted mean quality of a group of blocks; independent of the price."""
    return conditional_mean(market.pop, _group_atoms(group, market), market.weights)


def supply_weight(group, market: QuantityMarket) -> float:
    ids = _group_atoms(group, market)
    return float(np.sum(market.weights[ids] * market.pop.masses[ids]))


def supply(group, p: float, market: QuantityMarket) -> float:
    if not p > 0:
        raise DomainError(f"price must be > 0, got {p}")
    return p ** (1.0 / market.alpha) * supply_weight(group, market)


HESS_CAP = 1e150


@dataclass(frozen=True)
class _Program:
    """psi and its derivatives for groups already sorted by quality."""

    dist: TypeDistribution
    q: np.ndarray
    K: np.ndarray
    alpha: float

    @property
    def dq(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.q]))

    def cutoffs(self, p: np.ndarray) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], p])) / self.dq

    def psi(self, p: np.ndarray) -> float:
        e = 1.0 / self.alpha
        m = self.cutoffs(p)
        return float(np.sum(self.K * np.abs(p) ** (1 + e)) / (1 + e) - p[-1] + np.sum(self.dist.F2_ext(m) * self.dq))

    def demand(self, p: np.ndarray) -> np.ndarray:
        F = np.concatenate([np.asarray(self.dist.cdf(self.cutoffs(p)), dtype=float), [1.0]])
        return np.diff(F)

    def supply(self, p: np.ndarray) -> np.ndarray:
        return self.K * np.sign(p) * np.abs(p) ** (1.0 / self.alpha)

    def grad(self, p: np.ndarray) -> np.ndarray:
        return self.supply(p) - self.demand(p)

    def hess(self, p: np.ndarray) -> np.ndarray:
        n = len(p)
        e = 1.0 / self.alpha
        with np.errstate(divide="ignore"):
            H = np.diag(np.minimum(e * self.K * np.abs(p) ** (e - 1.0), HESS_CAP))
        # densities may blow up at an endpoint; capped entries only shape the step
        w = np.minimum(np.asarray(self.dist.pdf_ext(self.cutoffs(p)), dtype=float), HESS_CAP) / self.dq
        for j in range(n):
            H[j, j] += w[j]
            if j > 0:
                H[j - 1, j - 1] += w[j]
                H[j - 1, j] -= w[j]
                H[j, j - 1] -= w[j]
        return H

    def initial(self) -> np.ndarray:
        a, b = self.dist.support
        n = len(self.q)
        m = a + (b - a) * np.arange(1, n + 1) / (n + 1)
        return np.cumsum(m * self.dq)


@dataclass(frozen=True)
class EquilibriumResult:
    structure: InformationStructure
    groups: tuple[frozenset[int], ...]
    prices: tuple[float, ...]
    expected_qualities: tuple[float, ...]
    demands: tuple[float, ...]
    supplies: tuple[float, ...]
    clearing_residual: float
    implementable: bool
    iterations: int = 0
    diagnostic: str = ""
    cutoffs: tuple[float, ...] = ()

    @property
    def revenue(self) -> float:
        if not self.implementable:
            return 0.0
        return float(sum(p * min(d, s) for p, d, s in zip(self.prices, self.demands, self.supplies)))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def menu(self) -> Menu:
        return Menu(tuple(zip(self.prices, self.expected_qualities)))


def sorted_groups(structure: InformationStructure, market: QuantityMarket) -> tuple[tuple[frozenset[int], ...], np.ndarray]:
    groups = list(structure.groups)
    q = [expected_quality(g, market) for g in groups]
    order = np.argsort(q, kind="stable")
    return tuple(groups[i] for i in order), np.asarray(q)[order]


def _program(groups, q, market: QuantityMarket) -> _Program:
    K = np.array([supply_weight(g, market) for g in groups])
    return _Program(market.dist, np.asarray(q, dtype=float), K, market.alpha)


def _check_P(prog: _Program, p: np.ndarray) -> None:
    a, b = prog.dist.support
    p = np.asarray(p, dtype=float)
    if p.shape != prog.q.shape:
        raise DomainError(f"expected {len(prog.q)} prices, got {p.shape}")
    if np.any(p <= 0):
        raise DomainError(f"prices must be > 0, got {p.tolist()}")
    if np.any(np.diff(p) <= 0):
        raise DomainError(f"prices must increase with expected quality, got {p.tolist()}")
    m = prog.cutoffs(p)
    if np.any(np.diff(m) <= 0):
        raise DomainError(f"cutoffs must increase, got {m.tolist()}")
    if m[-1] > b:
        raise DomainError(f"top cutoff {m[-1]} exceeds b = {b}")
    if len(m) > 1 and m[1] < a:
        raise DomainError(f"cutoff m_2 = {m[1]} lies below a = {a}")


def _checked_program(prices, structure, market, check=True):
    structure.check_against(market.pop)
    groups, q = sorted_groups(structure, market)
    if np.any(np.diff(q) <= QUALITY_TIE * max(1.0, float(q.max()))) or q[0] <= 0:
        raise DomainError(f"structure {structure} has tied or zero expected qualities {q.tolist()}")
    prog = _program(groups, q, market)
    p = np.asarray(prices, dtype=float)
    if check:
        _check_P(prog, p)
    return prog, p


def psi(prices: Sequence[float], structure: InformationStructure, market: QuantityMarket) -> float:
    """Potential at ``prices`` listed in ascending expected-quality order of the groups."""
    prog, p = _checked_program(prices, structure, market)
    return prog.psi(p)


def excess_supply(prices: Sequence[float], structure: InformationStructure, market: QuantityMarket) -> np.ndarray:
    """Supply minus demand per group; equals the gradient of :func:`psi`."""
    prog, p = _checked_program(prices, structure, market)
    return prog.grad(p)


def _projected_grad(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.where(p > 0, g, np.minimum(g, 0.0))


def _newton(prog: _Program, p0: np.ndarray, max_iter: int, tol: float) -> tuple[np.ndarray, int]:
    """Projected Newton for min psi over p >= 0.

    Prices within eps of zero whose gradient points outward are pinned at
    zero. The others take a Newton step on the reduced Hessian, shrinking by
    at most a factor of ten per iteration so that the iterate never lands in
    a corner where the supply curve has infinite slope. An interior minimiser
    never touches the bound, so on implementable structures this is plain
    damped Newton.
    """
    p = np.maximum(np.array(p0, dtype=float), 0.0)
    val, g = prog.psi(p), prog.grad(p)
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(_projected_grad(p, g))))
        if gnorm < tol:
            return p, it - 1
        eps = min(1e-3, float(np.max(np.abs(p - np.maximum(p - g, 0.0)))))
        active = (p <= eps) & (g > 0)
        free = ~active
        step = -p.copy()
        if np.any(free):
            H = prog.hess(p)[np.ix_(free, free)]
            # small ridge for alpha < 1 with p_j = 0 and no density at m_j
            H[np.diag_indices_from(H)] += 1e-14 * (1.0 + min(float(np.diag(H).max()), 1e6))
            step[free] = -np.linalg.solve(H, g[free])
        t = 1.0
        for _ in range(80):
            cand = np.where(free, np.maximum(p + t * step, 0.1 * p), np.maximum(p + t * step, 0.0))
            cval, cg = prog.psi(cand), prog.grad(cand)
            if cval <= val + 1e-4 * float(g @ (cand - p)):
                break
            # near the optimum psi changes drown in rounding; fall back on the gradient
            if abs(cval - val) <= 1e-12 * (1.0 + abs(val)) and np.max(np.abs(_projected_grad(cand, cg))) < gnorm:
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"line search stalled at iteration {it}, |grad| = {gnorm:.3e}")
        p, val, g = cand, cval, cg
    gnorm = float(np.max(np.abs(_projected_grad(p, g))))
    if gnorm < tol:
        return p, max_iter
    raise ConvergenceError(f"no convergence in {max_iter} iterations, |grad| = {gnorm:.3e}")


def _solve_single(prog: _Program) -> np.ndarray:
    b = prog.dist.b
    hi = prog.q[0] * b
    root = optimize.brentq(lambda x: float(prog.grad(np.array([x]))[0]), 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return np.array([root])


def solve_equilibrium(
    structure: InformationStructure,
    market: QuantityMarket,
    init: Sequence[float] | None = None,
    max_iter: int = 200,
    tol: float = GRAD_TOL,
) -> EquilibriumResult:
    """Equilibrium prices for a structure; ``implementable`` is False when none is interior."""
    structure.check_against(market.pop)
    groups, q = sorted_groups(structure, market)

    def reject(reason: str) -> EquilibriumResult:
        nan = (math.nan,) * len(groups)
        return EquilibriumResult(structure, groups, nan, tuple(q.tolist()), nan, nan, math.inf, False, 0, reason)

    if q[0] <= 0:
        return reject("zero expected quality: the lowest group attracts no buyers")
    if np.any(np.diff(q) <= QUALITY_TIE * float(q.max())):
        return reject(f"groups with equal expected quality {q.tolist()}; merge them or drop one")

    prog = _program(groups, q, market)
    if len(groups) == 1:
        p, iters = _solve_single(prog), 0
    else:
        p0 = prog.initial() if init is None else np.asarray(init, dtype=float)
        p, iters = _newton(prog, p0, max_iter, tol)

    interior = bool(np.all(p > 0) and np.all(np.diff(p) > 0))
    if interior:
        D = np.asarray(demand_split(Menu(tuple(zip(p.tolist(), q.tolist()))), market.dist).demands)
    else:
        D = prog.demand(p)
    S = prog.supply(p)
    resid = float(np.max(np.abs(S - D)))
    ok = bool(interior and np.all(D > DEMAND_MIN) and resid < 1e-8)
    diag = ""
    if not ok:
        j = int(np.argmin(p)) if np.any(p <= 0) else int(np.argmin(D))
        diag = (
            f"boundary collapse: group {j + 1} {_label(groups[j])} has demand {D[j]:.3g} "
            f"at price {p[j]:.3g}; no interior equilibrium"
        )
    return EquilibriumResult(
        structure,
        groups,
        tuple(p.tolist()),
        tuple(q.tolist()),
        tuple(D.tolist()),
        tuple(S.tolist()),
        resid,
        ok,
        iters,
        diag,
        tuple(prog.cutoffs(p).tolist()),
    )


def _label(group) -> str:
    return "{" + ",".join(f"A{b + 1}" for b in sorted(group)) + "}"


def induced_menu(structure: InformationStructure, market: QuantityMarket) -> Menu:
    res = solve_equilibrium(structure, market)
    if not res.implementable:
        raise NotImplementableError(f"structure {structure} is not implementable: {res.diagnostic}", res)
    return res.menu


@dataclass(frozen=True)
class SupplyConditionReport:
    """Whether supply covers demand at the monopoly price of the highest-priced single block."""

    B_H: int
    p_eq: float
    p_M: float
    supply_at_pM: float
    demand_at_pM: float
    holds: bool
    closed_form_sum: float | None = None
    closed_form_holds: bool | None = None

    @property
    def consistent(self) -> bool:
        return self.closed_form_holds is None or self.closed_form_holds == self.holds


def check_supply_condition(market: QuantityMarket) -> SupplyConditionReport:
    singles = []
    for j in range(market.pop.n_blocks):
        res = solve_equilibrium(InformationStructure((frozenset([j]),)), market)
        if not res.implementable:
            raise NotImplementableError(f"single block A{j + 1} is not implementable: {res.diagnostic}", res)
        singles.append(res.prices[0])
    j = int(np.argmax(singles))
    group = frozenset([j])
    q = expected_quality(group, market)
    pM = monopoly_price(q, market.dist)
    S = supply(group, pM, market)
    D = float(1.0 - market.dist.cdf(pM / q))
    holds = bool(S >= D)
    cf_sum = cf_holds = None
    if market.dist.family == "Uniform" and market.dist.support == (0.0, 1.0) and market.alpha == 1.0:
        ids = market.pop.atoms_of(group)
        cf_sum = float(sum(market.pop.atoms[i].quality / market.k[i] * market.pop.atoms[i].mass for i in ids))
        cf_holds = cf_sum >= 1.0
    return SupplyConditionReport(j, float(singles[j]), float(pM), float(S), D, holds, cf_sum, cf_holds)


def _solve_for_search(args):
    structure, market = args
    try:
        return solve_equilibrium(structure, market)
    except ConvergenceError as exc:
        groups, q = sorted_groups(structure, market)
        nan = (math.nan,) * len(groups)
        return EquilibriumResult(structure, groups, nan, tuple(q.tolist()), nan, nan, math.inf, False, 0, f"solver: {exc}")


def solve_all(structures, market: QuantityMarket, jobs: int = 1) -> list[EquilibriumResult]:
    work = [(s, market) for s in structures]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_solve_for_search, work, chunksize=max(1, len(work) // (4 * jobs))))
    return [_solve_for_search(w) for w in work]


def pick_winner(table: Sequence, revenue_of, tie: float = 1e-12):
    """Highest revenue; near-ties go to fewer groups, then to enumeration order."""
    best = max(revenue_of(r) for r in table)
    for r in sorted(table, key=lambda r: r.structure.n_groups):
        if revenue_of(r) >= best - tie:
            return r


@dataclass(frozen=True)
class QuantitySearchReport:
    winner: EquilibriumResult
    table: tuple[EquilibriumResult, ...]
    strictly_convex: bool
    supply_condition: SupplyConditionReport | None
    winner_is_1_separating: bool
    winner_block_in_Io: bool
    winner_maximal: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def revenue(self) -> float:
        return self.winner.revenue

    @property
    def regular_case_applies(self) -> bool:
        return self.strictly_convex and self.supply_condition is not None and self.supply_condition.holds

    @property
    def prediction_holds(self) -> bool:
        """All three predicted features of the winner are present."""
        return self.winner_is_1_separating and self.winner_block_in_Io and self.winner_maximal


def search_optimal_structure(market: QuantityMarket, cap: int = DEFAULT_CAP, jobs: int = 1) -> QuantitySearchReport:
    """Solve every structure and report the revenue maximiser plus the regular-case checks."""
    structures = enumerate_structures(market.pop, cap)
    table = solve_all(structures, market, jobs)
    ok = [r for r in table if r.implementable]
    if not ok:
        raise NotImplementableError("no information structure is implementable")
    winner = pick_winner(ok, lambda r: r.revenue)

    notes = []
    a, b = market.dist.support
    convex = classify_Fm_convexity(market.dist, a, b) is Convexity.STRICTLY_CONVEX
    try:
        cond = check_supply_condition(market)
    except NotImplementableError as exc:
        cond = None
        notes.append(str(exc))

    one_sep = [(r.prices[0], r.expected_qualities[0]) for r in ok if r.n_groups == 1]
    single = winner.n_groups == 1
    maximal = single and is_maximal((winner.prices[0], winner.expected_qualities[0]), one_sep)
    in_Io = single and len(winner.groups[0]) == 1
    return QuantitySearchReport(winner, tuple(table), convex, cond, single, in_Io, maximal, tuple(notes))
