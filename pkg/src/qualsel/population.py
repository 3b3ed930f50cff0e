"""Seller populations, the platform partition into blocks, and information structures.

Qualities are held as a finite list of weighted atoms, so every integral over
the seller measure is an exact finite sum. Blocks are 0-based internally and
printed 1-based (``A1``, ``A2``, ...).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np

from .errors import CapExceededError, DomainError, EmptySupportError, ValidationError

DEFAULT_CAP = 10


@dataclass(frozen=True)
class Atom:
    quality: float
    mass: float


@dataclass(frozen=True)
class SellerPopulation:
    atoms: tuple[Atom, ...]
    blocks: tuple[tuple[int, ...], ...]
    x_bar: float | None = None

    def __post_init__(self):
        atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        atoms = tuple(Atom(float(a.quality), float(a.mass)) for a in atoms)
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "blocks", blocks)
        x_bar = max((a.quality for a in atoms), default=0.0) if self.x_bar is None else float(self.x_bar)
        object.__setattr__(self, "x_bar", x_bar)

        problems = []
        if not atoms:
            problems.append("atoms: at least one atom is required")
        for i, a in enumerate(atoms):
            if not (math.isfinite(a.quality) and 0.0 <= a.quality <= x_bar):
                problems.append(f"atoms[{i}].quality = {a.quality} outside [0, {x_bar}]")
            if not (math.isfinite(a.mass) and a.mass > 0):
                problems.append(f"atoms[{i}].mass = {a.mass} must be > 0")
        if not blocks:
            problems.append("blocks: at least one block is required")
        seen: dict[int, int] = {}
        for j, block in enumerate(blocks):
            if not block:
                problems.append(f"blocks[{j}] is empty")
            for i in block:
                if not 0 <= i < len(atoms):
                    problems.append(f"blocks[{j}] references atom index {i}, valid range is 0..{len(atoms) - 1}")
                elif i in seen:
                    problems.append(f"atom {i} appears in blocks[{seen[i]}] and blocks[{j}]")
                else:
                    seen[i] = j
        missing = sorted(set(range(len(atoms))) - set(seen))
        if missing:
            problems.append(f"atoms {missing} belong to no block")
        if problems:
            raise ValidationError(problems)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def qualities(self) -> np.ndarray:
        return np.array([a.quality for a in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([a.mass for a in self.atoms])

    def atoms_of(self, block_ids) -> list[int]:
        return sorted(i for b in block_ids for i in self.blocks[b])

    def block_mass(self, b: int) -> float:
        return float(sum(self.atoms[i].mass for i in self.blocks[b]))

    def block_mean(self, b: int) -> float:
        return conditional_mean(self, self.blocks[b])

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[tuple[float, float]]]) -> "SellerPopulation":
        """Build from nested ``[[(quality, mass), ...], ...]``, one inner list per block."""
        atoms, idx = [], []
        for block in blocks:
            idx.append(tuple(range(len(atoms), len(atoms) + len(block))))
            atoms.extend(Atom(float(q), float(m)) for q, m in block)
        return cls(tuple(atoms), tuple(idx))


def conditional_mean(pop: SellerPopulation, atom_set, weights=None) -> float:
    """Weighted mean quality over ``atom_set``; ``weights`` is indexed by atom."""
    ids = list(atom_set)
    if not ids:
        raise EmptySupportError()
    q = pop.qualities[ids]
    w = pop.masses[ids]
    if weights is not None:
        w = w * np.asarray(weights, dtype=float)[ids]
    total = float(w.sum())
    if not total > 0:
        raise EmptySupportError()
    return float(q @ w / total)


_GROUP_RE = re.compile(r"\{([^{}]*)\}")


@dataclass(frozen=True)
class InformationStructure:
    """Disjoint groups of block indices; blocks outside every group are banned."""

    groups: tuple[frozenset[int], ...]

    def __post_init__(self):
        groups = tuple(frozenset(int(b) for b in g) for g in self.groups)
        if not groups:
            raise ValidationError("an information structure needs at least one group")
        problems = []
        seen: set[int] = set()
        for j, g in enumerate(groups):
            if not g:
                problems.append(f"group {j + 1} is empty")
            if any(b < 0 for b in g):
                problems.append(f"group {j + 1} has a negative block index")
            dup = seen & g
            if dup:
                problems.append(f"blocks {sorted(b + 1 for b in dup)} appear in more than one group")
            seen |= g
        if problems:
            raise ValidationError(problems)
        object.__setattr__(self, "groups", tuple(sorted(groups, key=min)))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def blocks(self) -> frozenset[int]:
        return frozenset().union(*self.groups)

    def check_against(self, pop: SellerPopulation) -> None:
        bad = sorted(b + 1 for b in self.blocks if b >= pop.n_blocks)
        if bad:
            raise ValidationError(f"structure {self} references blocks {bad}; population has {pop.n_blocks}")

    def is_full_disclosure(self, pop: SellerPopulation) -> bool:
        return self.n_groups == pop.n_blocks and all(len(g) == 1 for g in self.groups)

    def __str__(self) -> str:
        return "|".join("{" + ",".join(f"A{b + 1}" for b in sorted(g)) + "}" for g in self.groups)

    @classmethod
    def parse(cls, text: str) -> "InformationStructure":
        """Parse ``"{A1,A2}|{A3}"``; block labels are 1-based."""
        src = text.strip()
        parts = [p.strip() for p in src.split("|")] if src else []
        groups = []
        for part in parts:
            m = _GROUP_RE.fullmatch(part)
            if m is None:
                raise ValidationError(f"cannot parse group {part!r} in {text!r}; expected e.g. {{A1,A2}}|{{A3}}")
            ids = []
            for tok in m.group(1).split(","):
                tok = tok.strip()
                t = re.fullmatch(r"[Aa]?(\d+)", tok)
                if t is None or int(t.group(1)) < 1:
                    raise ValidationError(f"bad block label {tok!r} in {text!r}")
                ids.append(int(t.group(1)) - 1)
            groups.append(frozenset(ids))
        return cls(tuple(groups))

    @classmethod
    def full_disclosure(cls, n_blocks: int) -> "InformationStructure":
        return cls(tuple(frozenset([b]) for b in range(n_blocks)))


@lru_cache(maxsize=None)
def bell(n: int) -> int:
    """Bell number via the Bell triangle."""
    if n < 0:
        raise DomainError("bell(n) needs n >= 0")
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def structure_count(n_blocks: int) -> int:
    return sum(math.comb(n_blocks, s) * bell(s) for s in range(1, n_blocks + 1))


def _set_partitions(items: tuple[int, ...]) -> Iterator[list[tuple[int, ...]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [(first,)] + part
        for j in range(len(part)):
            yield part[:j] + [(first,) + part[j]] + part[j + 1 :]


def iter_structures(n_blocks: int) -> Iterator[InformationStructure]:
    for size in range(1, n_blocks + 1):
        for subset in combinations(range(n_blocks), size):
            parts = [sorted(tuple(sorted(g)) for g in p) for p in _set_partitions(subset)]
            parts.sort(key=lambda p: (-len(p), p))
            for p in parts:
                yield InformationStructure(tuple(frozenset(g) for g in p))


def enumerate_structures(pop: SellerPopulation | int, cap: int = DEFAULT_CAP) -> list[InformationStructure]:
    """All information structures over the blocks, in canonical order.

    Subsets of blocks come by size then lexicographically; partitions of one
    subset come finest first.
    """
    n = pop if isinstance(pop, int) else pop.n_blocks
    if n > cap:
        raise CapExceededError(n, cap, structure_count(n))
    return list(iter_structures(n))
