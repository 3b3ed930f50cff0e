"""Buyer-type distributions on a bounded interval [a, b].

Every family exposes the CDF ``F``, density ``f``, the antiderivative
``F2(m) = int_a^m F``, and the density elasticity ``m f'(m) / f(m)``. The
elasticity drives :func:`classify_Fm_convexity`: ``F(m) m`` is convex exactly
where the elasticity stays at or above -2.

All methods accept scalars or numpy arrays and are pure.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, ClassVar

import numpy as np
from scipy import special

from .errors import DomainError, ValidationError

_EDGE = 1e-12  # relative slack when checking support membership


class Convexity(str, Enum):
    CONVEX = "Convex"
    STRICTLY_CONVEX = "StrictlyConvex"
    CONCAVE = "Concave"
    NEITHER = "Neither"

    @property
    def is_convex(self) -> bool:
        return self in (Convexity.CONVEX, Convexity.STRICTLY_CONVEX)

    def __str__(self) -> str:
        return self.value


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


class TypeDistribution(ABC):
    """Base class. Subclasses implement the ``_``-prefixed kernels on [a, b]."""

    family: ClassVar[str]
    support: tuple[float, float]

    @property
    def a(self) -> float:
        return self.support[0]

    @property
    def b(self) -> float:
        return self.support[1]

    @property
    def width(self) -> float:
        return self.b - self.a

    # kernels: arguments already lie in [a, b]
    @abstractmethod
    def _cdf(self, m: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _pdf(self, m: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _F2(self, m: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _elasticity(self, m: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def params(self) -> dict[str, Any]: ...

    def _elasticity_bounds(self, lo: float, hi: float) -> tuple[float, float] | None:
        """Exact (min, max) of the elasticity on (lo, hi), or None if unknown."""
        return None

    def _breakpoints(self) -> list[float]:
        return []

    def _elasticity_one_sided(self, m: float) -> list[float]:
        return [float(self._elasticity(np.asarray(m)))]

    # public API
    def cdf(self, m):
        """F(m), clamped to 0 below the support and 1 above it."""
        x = np.asarray(m, dtype=float)
        inside = np.clip(x, self.a, self.b)
        out = np.where(x <= self.a, 0.0, np.where(x >= self.b, 1.0, self._cdf(inside)))
        return _scalar_or_array(out, m)

    def _in_support(self, m, name: str, interior: bool = False) -> np.ndarray:
        x = np.asarray(m, dtype=float)
        slack = _EDGE * max(1.0, self.width)
        if interior:
            bad = (x <= self.a) | (x >= self.b)
        else:
            bad = (x < self.a - slack) | (x > self.b + slack)
        if np.any(bad) or np.any(np.isnan(x)):
            where = "(a, b)" if interior else "[a, b]"
            raise DomainError(f"{name}: argument outside {where} = {list(self.support)}")
        return np.clip(x, self.a, self.b)

    def pdf(self, m):
        x = self._in_support(m, "pdf")
        return _scalar_or_array(self._pdf(x), m)

    def antiderivative_cdf(self, m):
        """F2(m) = int_a^m F(t) dt."""
        x = self._in_support(m, "antiderivative_cdf")
        return _scalar_or_array(self._F2(x), m)

    def density_elasticity(self, m):
        x = self._in_support(m, "density_elasticity", interior=True)
        return _scalar_or_array(self._elasticity(x), m)

    # extended versions used by the solvers: defined on the whole real line
    def pdf_ext(self, m):
        x = np.asarray(m, dtype=float)
        inside = np.clip(x, self.a, self.b)
        out = np.where((x < self.a) | (x > self.b), 0.0, self._pdf(inside))
        return _scalar_or_array(out, m)

    def F2_ext(self, m):
        """F2 continued as 0 below a and with slope 1 above b; convex and C^1."""
        x = np.asarray(m, dtype=float)
        inside = np.clip(x, self.a, self.b)
        f2 = self._F2(inside)
        out = np.where(x <= self.a, 0.0, np.where(x >= self.b, f2 + (x - self.b), f2))
        return _scalar_or_array(out, m)

    @property
    def has_closed_form_quantile(self) -> bool:
        return False

    def ppf(self, u):
        raise NotImplementedError(f"{self.family} has no closed-form quantile")

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "params": self.params(), "support": list(self.support)}

    def __str__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.params().items() if k != "pieces")
        return f"{self.family}({args}) on [{self.a:g}, {self.b:g}]"


def _check_support(support, problems: list[str], positive: bool = False) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in support)
    except (TypeError, ValueError):
        problems.append(f"support must be a pair of reals, got {support!r}")
        return (0.0, 1.0)
    if not (math.isfinite(a) and math.isfinite(b)):
        problems.append("support endpoints must be finite")
    elif a < 0 or not a < b:
        problems.append(f"support must satisfy 0 <= a < b, got [{a}, {b}]")
    elif positive and a <= 0:
        problems.append(f"support must start above 0 for this family, got a={a}")
    return (a, b)


@dataclass(frozen=True)
class Uniform(TypeDistribution):
    support: tuple[float, float] = (0.0, 1.0)
    family: ClassVar[str] = "Uniform"

    def __post_init__(self):
        problems: list[str] = []
        object.__setattr__(self, "support", _check_support(self.support, problems))
        if problems:
            raise ValidationError(problems)

    def _cdf(self, m):
        return (m - self.a) / self.width

    def _pdf(self, m):
        return np.full_like(np.asarray(m, dtype=float), 1.0 / self.width)

    def _F2(self, m):
        return (m - self.a) ** 2 / (2.0 * self.width)

    def _elasticity(self, m):
        return np.zeros_like(np.asarray(m, dtype=float))

    def _elasticity_bounds(self, lo, hi):
        return (0.0, 0.0)

    def params(self):
        return {}

    @property
    def has_closed_form_quantile(self):
        return True

    def ppf(self, u):
        return self.a + np.asarray(u, dtype=float) * self.width


# antiderivatives of m**c and of those antiderivatives
def _G(c: float, m):
    if c == -1.0:
        return np.log(m)
    return m ** (c + 1.0) / (c + 1.0)


def _H(c: float, m):
    if c == -1.0:
        return m * np.log(m) - m
    if c == -2.0:
        return -np.log(m)
    return m ** (c + 2.0) / ((c + 1.0) * (c + 2.0))


@dataclass(frozen=True)
class Power(TypeDistribution):
    """Density proportional to m**exponent, normalised on the support."""

    support: tuple[float, float] = (0.0, 1.0)
    exponent: float = 0.0
    family: ClassVar[str] = "Power"
    _norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        problems: list[str] = []
        a, b = _check_support(self.support, problems)
        object.__setattr__(self, "support", (a, b))
        e = float(self.exponent)
        object.__setattr__(self, "exponent", e)
        if not math.isfinite(e):
            problems.append("exponent must be finite")
        elif a == 0.0 and e <= -1.0 and not problems:
            problems.append(f"exponent {e} <= -1 is not integrable at a=0")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "_norm", 1.0 / (_G(e, b) - _G(e, a)))

    def _cdf(self, m):
        return self._norm * (_G(self.exponent, m) - _G(self.exponent, self.a))

    def _pdf(self, m):
        with np.errstate(divide="ignore"):  # negative exponent at m = 0 gives inf, as it should
            return self._norm * np.asarray(m, dtype=float) ** self.exponent

    def _F2(self, m):
        e, a = self.exponent, self.a
        return self._norm * (_H(e, m) - _H(e, a) - _G(e, a) * (m - a))

    def _elasticity(self, m):
        return np.full_like(np.asarray(m, dtype=float), self.exponent)

    def _elasticity_bounds(self, lo, hi):
        return (self.exponent, self.exponent)

    def params(self):
        return {"exponent": self.exponent}

    @property
    def has_closed_form_quantile(self):
        return True

    def ppf(self, u):
        e = self.exponent
        g = _G(e, self.a) + np.asarray(u, dtype=float) / self._norm
        if e == -1.0:
            return np.exp(g)
        return ((e + 1.0) * g) ** (1.0 / (e + 1.0))


@dataclass(frozen=True)
class ParetoTruncated(TypeDistribution):
    """Pareto law F(m) = 1 - (a/m)**alpha restricted to [a, b] and renormalised."""

    support: tuple[float, float] = (1.0, 10.0)
    alpha: float = 1.0
    family: ClassVar[str] = "ParetoTruncated"
    _power: Power = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        problems: list[str] = []
        a, b = _check_support(self.support, problems, positive=True)
        object.__setattr__(self, "support", (a, b))
        alpha = float(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if not (math.isfinite(alpha) and alpha > 0):
            problems.append(f"alpha must be > 0, got {alpha}")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "_power", Power((a, b), -(alpha + 1.0)))

    def _cdf(self, m):
        a, b, al = self.a, self.b, self.alpha
        return (1.0 - (a / m) ** al) / (1.0 - (a / b) ** al)

    def _pdf(self, m):
        return self._power._pdf(m)

    def _F2(self, m):
        return self._power._F2(m)

    def _elasticity(self, m):
        return self._power._elasticity(m)

    def _elasticity_bounds(self, lo, hi):
        return self._power._elasticity_bounds(lo, hi)

    def params(self):
        return {"alpha": self.alpha}

    @property
    def has_closed_form_quantile(self):
        return True

    def ppf(self, u):
        a, b, al = self.a, self.b, self.alpha
        u = np.asarray(u, dtype=float)
        return a * (1.0 - u * (1.0 - (a / b) ** al)) ** (-1.0 / al)


@dataclass(frozen=True)
class Beta(TypeDistribution):
    """Beta(alpha, beta) law rescaled from [0, 1] onto the support."""

    support: tuple[float, float] = (0.0, 1.0)
    alpha: float = 1.0
    beta: float = 1.0
    family: ClassVar[str] = "Beta"

    def __post_init__(self):
        problems: list[str] = []
        object.__setattr__(self, "support", _check_support(self.support, problems))
        for name in ("alpha", "beta"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not (math.isfinite(v) and v > 0):
                problems.append(f"{name} must be > 0, got {v}")
        if problems:
            raise ValidationError(problems)

    def _t(self, m):
        return (np.asarray(m, dtype=float) - self.a) / self.width

    def _cdf(self, m):
        return special.betainc(self.alpha, self.beta, self._t(m))

    def _pdf(self, m):
        t = self._t(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = (
                special.xlogy(self.alpha - 1.0, t)
                + special.xlog1py(self.beta - 1.0, -t)
                - special.betaln(self.alpha, self.beta)
            )
        return np.exp(logf) / self.width

    def _F2(self, m):
        t = self._t(m)
        al, be = self.alpha, self.beta
        inner = t * special.betainc(al, be, t) - al / (al + be) * special.betainc(al + 1.0, be, t)
        return self.width * inner

    def _elasticity(self, m):
        x = np.asarray(m, dtype=float)
        t = self._t(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return x / self.width * ((self.alpha - 1.0) / t - (self.beta - 1.0) / (1.0 - t))

    def _elasticity_bounds(self, lo, hi):
        if self.alpha == 1.0 and self.beta == 1.0:
            return (0.0, 0.0)
        return None

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta}

    @property
    def has_closed_form_quantile(self):
        return True

    def ppf(self, u):
        return self.a + self.width * special.betaincinv(self.alpha, self.beta, np.asarray(u, dtype=float))


def _as_real(v) -> float:
    # coefficients may be given as exact fractions such as "8/3"
    return float(Fraction(str(v))) if isinstance(v, str) else float(v)


@dataclass(frozen=True)
class PiecewisePolyDensity(TypeDistribution):
    """Density given piecewise as sums of power terms ``coef * m**power``.

    ``pieces`` is a sequence of ``((lo, hi), ((coef, power), ...))`` covering
    the support contiguously. Integer powers give polynomials; real powers give
    Pareto-like tails. The density is renormalised to unit mass, and F and F2
    are computed by exact antidifferentiation on each piece.
    """

    pieces: tuple = ()
    family: ClassVar[str] = "PiecewisePolyDensity"
    support: tuple[float, float] = field(init=False)
    _edges: np.ndarray = field(init=False, repr=False, compare=False)
    _F_at: np.ndarray = field(init=False, repr=False, compare=False)
    _F2_at: np.ndarray = field(init=False, repr=False, compare=False)
    _scale: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        problems: list[str] = []
        pieces = []
        for i, piece in enumerate(self.pieces):
            try:
                (lo, hi), terms = piece
                lo, hi = float(lo), float(hi)
                terms = tuple((_as_real(c), _as_real(p)) for c, p in terms)
            except (TypeError, ValueError):
                problems.append(f"pieces[{i}]: expected ((lo, hi), ((coef, power), ...))")
                continue
            if not lo < hi:
                problems.append(f"pieces[{i}]: empty interval [{lo}, {hi}]")
            if not terms:
                problems.append(f"pieces[{i}]: no terms")
            if lo <= 0.0 and any(p <= -1.0 for _, p in terms):
                problems.append(f"pieces[{i}]: power <= -1 needs the piece to start above 0")
            pieces.append(((lo, hi), terms))
        if not pieces and not problems:
            problems.append("at least one piece is required")
        for i in range(1, len(pieces)):
            if abs(pieces[i][0][0] - pieces[i - 1][0][1]) > 1e-12:
                problems.append(f"pieces[{i}] does not start where pieces[{i - 1}] ends")
        if pieces and pieces[0][0][0] < 0:
            problems.append("support must lie in [0, inf)")
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "pieces", tuple(pieces))
        object.__setattr__(self, "support", (pieces[0][0][0], pieces[-1][0][1]))
        edges = np.array([p[0][0] for p in pieces] + [pieces[-1][0][1]])
        object.__setattr__(self, "_edges", edges)

        # unnormalised mass and first moment of the CDF per piece
        masses, f2s = [], []
        F_lo = 0.0
        for (lo, hi), terms in pieces:
            mass = sum(c * (_G(p, hi) - _G(p, lo)) for c, p in terms)
            f2 = F_lo * (hi - lo) + sum(c * (_H(p, hi) - _H(p, lo) - _G(p, lo) * (hi - lo)) for c, p in terms)
            masses.append(mass)
            f2s.append(f2)
            F_lo += mass
        total = F_lo
        if not total > 0:
            raise ValidationError("density integrates to a nonpositive mass")
        object.__setattr__(self, "_scale", 1.0 / total)
        object.__setattr__(self, "_F_at", np.concatenate([[0.0], np.cumsum(masses)]))
        object.__setattr__(self, "_F2_at", np.concatenate([[0.0], np.cumsum(f2s)]))

        grid = np.concatenate([np.linspace(lo, hi, 65)[1:-1] for (lo, hi), _ in pieces])
        if np.any(self._pdf(grid) <= 0):
            raise ValidationError("density must be strictly positive inside the support")

    def _piece_index(self, m):
        idx = np.searchsorted(self._edges, m, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _eval(self, m, kernel):
        x = np.asarray(m, dtype=float)
        idx = self._piece_index(x)
        out = np.zeros_like(x)
        for j, ((lo, hi), terms) in enumerate(self.pieces):
            mask = idx == j
            if np.any(mask):
                out[mask] = kernel(j, lo, terms, x[mask])
        return out

    def _cdf(self, m):
        def k(j, lo, terms, x):
            return self._F_at[j] + sum(c * (_G(p, x) - _G(p, lo)) for c, p in terms)

        return self._scale * self._eval(m, k)

    def _pdf(self, m):
        return self._scale * self._eval(m, lambda j, lo, terms, x: sum(c * x**p for c, p in terms))

    def _F2(self, m):
        def k(j, lo, terms, x):
            own = sum(c * (_H(p, x) - _H(p, lo) - _G(p, lo) * (x - lo)) for c, p in terms)
            return self._F2_at[j] + self._F_at[j] * (x - lo) + own

        return self._scale * self._eval(m, k)

    @staticmethod
    def _terms_elasticity(terms, x):
        num = sum(c * p * x**p for c, p in terms)
        den = sum(c * x**p for c, p in terms)
        return num / den

    def _elasticity(self, m):
        return self._eval(m, lambda j, lo, terms, x: self._terms_elasticity(terms, x))

    def _elasticity_bounds(self, lo, hi):
        # single power term on every piece touching (lo, hi): constant elasticity per piece
        vals = []
        for (plo, phi), terms in self.pieces:
            if phi <= lo or plo >= hi:
                continue
            if len(terms) != 1:
                return None
            vals.append(terms[0][1])
        return (min(vals), max(vals)) if vals else None

    def _breakpoints(self):
        return [float(e) for e in self._edges[1:-1]]

    def _elasticity_one_sided(self, m):
        out = []
        for (lo, hi), terms in self.pieces:
            if lo <= m <= hi:
                out.append(float(self._terms_elasticity(terms, np.asarray(m))))
        return out

    def params(self):
        return {"pieces": [{"interval": [lo, hi], "terms": [list(t) for t in terms]} for (lo, hi), terms in self.pieces]}


FAMILIES = {cls.family: cls for cls in (Uniform, Power, Beta, ParetoTruncated, PiecewisePolyDensity)}

_PARAM_KEYS = {
    "Uniform": set(),
    "Power": {"exponent"},
    "Beta": {"alpha", "beta"},
    "ParetoTruncated": {"alpha"},
    "PiecewisePolyDensity": {"pieces"},
}


def make_distribution(family: str, params: dict | None = None, support=None) -> TypeDistribution:
    """Build a distribution from a family name, parameter map and support pair."""
    params = dict(params or {})
    if family not in FAMILIES:
        raise ValidationError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    unknown = set(params) - _PARAM_KEYS[family]
    if unknown:
        raise ValidationError([f"unknown parameter {k!r} for {family}" for k in sorted(unknown)])
    if family == "PiecewisePolyDensity":
        raw = params.get("pieces")
        if not isinstance(raw, list):
            raise ValidationError("PiecewisePolyDensity needs params.pieces as a list")
        pieces = []
        for i, p in enumerate(raw):
            if not isinstance(p, dict) or "interval" not in p or "terms" not in p:
                raise ValidationError(f"pieces[{i}] needs 'interval' and 'terms'")
            pieces.append((tuple(p["interval"]), tuple(tuple(t) for t in p["terms"])))
        dist = PiecewisePolyDensity(tuple(pieces))
        if support is not None and tuple(float(s) for s in support) != dist.support:
            raise ValidationError(f"support {list(support)} disagrees with pieces {list(dist.support)}")
        return dist
    kwargs = {k: _as_real(v) for k, v in params.items()}
    if support is not None:
        kwargs["support"] = tuple(support)
    missing = _PARAM_KEYS[family] - set(kwargs)
    if missing:
        raise ValidationError([f"missing parameter {k!r} for {family}" for k in sorted(missing)])
    return FAMILIES[family](**kwargs)


def _grid_points(dist: TypeDistribution, lo: float, hi: float, grid: int) -> np.ndarray:
    w = hi - lo
    pts = np.linspace(lo, hi, grid)
    refine = w * np.logspace(-8, -2, 7)
    pts = np.concatenate([pts, lo + refine, hi - refine])
    # the elasticity is only defined strictly inside the support
    nudge = 1e-9 * dist.width
    pts = np.clip(pts, dist.a + nudge, dist.b - nudge)
    return np.unique(pts)


def elasticity_range(dist: TypeDistribution, lo: float, hi: float, grid: int = 1024) -> tuple[float, float]:
    """(min, max) of the density elasticity over [lo, hi]; exact where the family allows."""
    bounds = dist._elasticity_bounds(lo, hi)
    if bounds is not None:
        return bounds
    vals = list(np.asarray(dist._elasticity(_grid_points(dist, lo, hi, grid)), dtype=float))
    for bp in dist._breakpoints():
        if lo <= bp <= hi:
            vals.extend(dist._elasticity_one_sided(bp))
    arr = np.asarray(vals)
    arr = arr[~np.isnan(arr)]
    return float(arr.min()), float(arr.max())


def classify_Fm_convexity(
    dist: TypeDistribution, lo: float, hi: float, grid: int = 1024, tol: float = 1e-9
) -> Convexity:
    """Classify m -> F(m) m on [lo, hi] through the elasticity threshold -2.

    Near-ties within ``tol`` of -2 count as convex (not strictly) or concave;
    any sample further than ``tol`` on both sides gives NEITHER.
    """
    slack = _EDGE * max(1.0, dist.width)
    if not (dist.a - slack <= lo < hi <= dist.b + slack):
        raise DomainError(f"classify_Fm_convexity needs a <= lo < hi <= b, got [{lo}, {hi}] in {list(dist.support)}")
    emin, emax = elasticity_range(dist, max(lo, dist.a), min(hi, dist.b), grid)
    if emin >= -2.0 - tol:
        return Convexity.STRICTLY_CONVEX if emin > -2.0 + tol else Convexity.CONVEX
    if emax <= -2.0 + tol:
        return Convexity.CONCAVE
    return Convexity.NEITHER


def classify_Fm_convexity_extended(dist: TypeDistribution, lo: float, hi: float, grid: int = 1024) -> Convexity:
    """Like :func:`classify_Fm_convexity` but ``lo`` may fall below the support.

    F(m) m vanishes left of a and has slope a f(a) >= 0 there, so extending a
    convex piece leftwards keeps it convex (no longer strictly) while concavity
    cannot survive the kink.
    """
    if hi <= dist.a:
        return Convexity.CONVEX
    if lo >= dist.a:
        return classify_Fm_convexity(dist, lo, min(hi, dist.b), grid)
    inner = classify_Fm_convexity(dist, dist.a, min(hi, dist.b), grid)
    if inner.is_convex:
        return Convexity.CONVEX
    return Convexity.NEITHER
