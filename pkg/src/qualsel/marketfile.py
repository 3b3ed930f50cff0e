"""JSON market files.

A file describes buyers, sellers and exactly one model section::

    {
      "buyers":  {"family": "Uniform", "params": {}, "support": [0, 1]},
      "sellers": {"atoms": [{"quality": 0.25, "mass": 2.0}, ...],
                  "blocks": [[0], [1]]},
      "model":   {"quantity": {"alpha": 1.0, "k": [1.0, 1.0]}},
      "options": {"cap": 10, "seed": 0}
    }

``k`` may be a single number applied to every atom. A price model uses
``{"price": {"costs": [...]}}`` with one cost per block. Problems are
collected across the whole file and reported together with their paths.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .dist import TypeDistribution, make_distribution
from .errors import ValidationError
from .population import Atom, SellerPopulation
from .price_model import PriceMarket
from .quantity_model import QuantityMarket

OPTION_KEYS = {"cap": int, "seed": int, "samples": int, "jobs": int, "grid_resolution": float}


@dataclass(frozen=True)
class MarketSpec:
    dist: TypeDistribution
    pop: SellerPopulation
    model: str
    market: QuantityMarket | PriceMarket
    options: dict = field(default_factory=dict)
    digest: str = ""


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _prefixed(path: str, exc: ValidationError) -> list[str]:
    return [f"{path}: {p}" for p in exc.problems]


def _unknown(obj: dict, allowed: set, path: str) -> list[str]:
    return [f"{path}.{k}: unknown field" for k in sorted(set(obj) - allowed)]


def parse_spec_data(data: Any, digest: str = "") -> MarketSpec:
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ValidationError("top level must be an object")
    problems += _unknown(data, {"buyers", "sellers", "model", "options"}, "$")

    dist = None
    buyers = data.get("buyers")
    if not isinstance(buyers, dict):
        problems.append("buyers: required object")
    else:
        problems += _unknown(buyers, {"family", "params", "support"}, "buyers")
        family = buyers.get("family")
        params = buyers.get("params", {})
        if not isinstance(family, str):
            problems.append("buyers.family: required string")
        elif not isinstance(params, dict):
            problems.append("buyers.params: must be an object")
        else:
            try:
                dist = make_distribution(family, params, buyers.get("support"))
            except ValidationError as exc:
                problems += _prefixed("buyers", exc)
            except TypeError as exc:
                problems.append(f"buyers: {exc}")

    pop = None
    sellers = data.get("sellers")
    if not isinstance(sellers, dict):
        problems.append("sellers: required object")
    else:
        problems += _unknown(sellers, {"atoms", "blocks", "x_bar"}, "sellers")
        atoms, blocks, local = [], [], []
        raw_atoms = sellers.get("atoms")
        if not isinstance(raw_atoms, list) or not raw_atoms:
            local.append("sellers.atoms: required nonempty list")
        else:
            for i, a in enumerate(raw_atoms):
                if not isinstance(a, dict) or not _is_num(a.get("quality")) or not _is_num(a.get("mass")):
                    local.append(f"sellers.atoms[{i}]: needs numeric 'quality' and 'mass'")
                else:
                    local += _unknown(a, {"quality", "mass"}, f"sellers.atoms[{i}]")
                    atoms.append(Atom(float(a["quality"]), float(a["mass"])))
        raw_blocks = sellers.get("blocks")
        if not isinstance(raw_blocks, list) or not raw_blocks:
            local.append("sellers.blocks: required nonempty list of atom-index lists")
        else:
            for j, b in enumerate(raw_blocks):
                if not isinstance(b, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in b):
                    local.append(f"sellers.blocks[{j}]: must be a list of integer atom indices")
                else:
                    blocks.append(tuple(b))
        x_bar = sellers.get("x_bar")
        if x_bar is not None and not _is_num(x_bar):
            local.append("sellers.x_bar: must be a number")
        problems += local
        if not local:
            try:
                pop = SellerPopulation(tuple(atoms), tuple(blocks), x_bar)
            except ValidationError as exc:
                problems += _prefixed("sellers", exc)

    model_name, market = "", None
    model = data.get("model")
    if not isinstance(model, dict):
        problems.append("model: required object with exactly one of 'quantity' or 'price'")
    else:
        problems += _unknown(model, {"quantity", "price"}, "model")
        present = [k for k in ("quantity", "price") if k in model]
        if len(present) != 1:
            problems.append(f"model: exactly one of 'quantity' or 'price' is required, found {present or 'none'}")
        else:
            model_name = present[0]
            sec = model[model_name]
            path = f"model.{model_name}"
            if not isinstance(sec, dict):
                problems.append(f"{path}: must be an object")
            elif model_name == "quantity":
                problems += _unknown(sec, {"alpha", "k"}, path)
                alpha, k = sec.get("alpha"), sec.get("k")
                local = []
                if not _is_num(alpha):
                    local.append(f"{path}.alpha: required number")
                elif not alpha > 0:
                    local.append(f"{path}.alpha = {alpha} must be > 0")
                if not (_is_num(k) or (isinstance(k, list) and all(_is_num(v) for v in k))):
                    local.append(f"{path}.k: required number or list of numbers (one per atom)")
                elif any(not v > 0 for v in ([k] if _is_num(k) else k)):
                    local.append(f"{path}.k: every entry must be > 0")
                problems += local
                # checked here as well so they surface even when sellers are invalid
                if not local and dist is not None and pop is not None:
                    try:
                        market = QuantityMarket(dist, pop, k if _is_num(k) else tuple(k), alpha)
                    except ValidationError as exc:
                        problems += _prefixed(path, exc)
            else:
                problems += _unknown(sec, {"costs"}, path)
                costs = sec.get("costs")
                if not (isinstance(costs, list) and all(_is_num(v) for v in costs)):
                    problems.append(f"{path}.costs: required list of numbers (one per block)")
                elif any(not v > 0 for v in costs):
                    problems.append(f"{path}.costs: every entry must be > 0")
                elif dist is not None and pop is not None:
                    try:
                        market = PriceMarket(dist, pop, tuple(costs))
                    except ValidationError as exc:
                        problems += _prefixed(path, exc)

    options = data.get("options", {})
    if not isinstance(options, dict):
        problems.append("options: must be an object")
        options = {}
    else:
        problems += _unknown(options, set(OPTION_KEYS), "options")
        for key, kind in OPTION_KEYS.items():
            if key in options and not (_is_num(options[key]) and (kind is float or float(options[key]).is_integer())):
                problems.append(f"options.{key}: must be {'an integer' if kind is int else 'a number'}")

    if problems:
        raise ValidationError(problems)
    opts = {k: OPTION_KEYS[k](v) for k, v in options.items()}
    return MarketSpec(dist, pop, model_name, market, opts, digest)


def parse_spec(path: str | Path) -> MarketSpec:
    raw = Path(path).read_bytes()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return parse_spec_data(data, hashlib.sha256(raw).hexdigest())
