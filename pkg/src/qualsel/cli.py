"""Command-line front end: ``qualsel <command> --spec FILE [...]``.

Exit codes: 0 success, 1 a ``verify`` check failed, 2 invalid input,
3 the requested structure is not implementable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from typing import Any, Callable

import numpy as np

from . import oracle, price_model, quantity_model
from .dist import classify_Fm_convexity, elasticity_range
from .errors import DomainError, NotImplementableError, ValidationError
from .marketfile import MarketSpec, parse_spec
from .population import InformationStructure, enumerate_structures
from .pricedisc import ConstraintSet, Menu, check_regularity, compare_submenu, demand_split, menu_revenue

EXIT_OK, EXIT_VERIFY, EXIT_INVALID, EXIT_NOT_IMPLEMENTABLE = 0, 1, 2, 3


class Report:
    """Rows plus free-form results; rendered as text, CSV or JSON."""

    def __init__(self, command: str, spec: MarketSpec, columns: list[str]):
        self.command = command
        self.spec = spec
        self.columns = columns
        self.rows: list[dict[str, Any]] = []
        self.results: dict[str, Any] = {}
        self.diagnostics: list[str] = []
        self.lines: list[str] = []

    def render(self, fmt: str) -> str:
        if fmt == "json":
            doc = {
                "spec_digest": self.spec.digest,
                "command": self.command,
                "results": _clean({**self.results, "rows": self.rows}),
                "diagnostics": list(self.diagnostics),
            }
            return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
            w.writeheader()
            for row in self.rows:
                w.writerow({k: _cell(row.get(k)) for k in self.columns})
            return buf.getvalue()
        out = list(self.lines)
        out += [f"note: {d}" for d in self.diagnostics]
        return "\n".join(out) + "\n"


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _cell(v) -> str:
    if isinstance(v, (list, tuple)):
        return ";".join(_cell(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _groups_text(groups) -> str:
    return "|".join("{" + ",".join(f"A{b + 1}" for b in sorted(g)) + "}" for g in groups)


def _fmt(xs) -> str:
    return "(" + ", ".join(f"{x:.6g}" for x in xs) + ")"


QTY_COLUMNS = ["structure", "groups", "prices", "qualities", "demands", "supplies", "revenue", "implementable", "residual"]
PRICE_COLUMNS = ["structure", "groups", "participants", "prices", "qualities", "demands", "revenue", "implementable"]
MENU_COLUMNS = ["menu_id", "k", "prices", "qualities", "cutoffs", "demands", "revenue"]


def _qty_row(r: quantity_model.EquilibriumResult) -> dict:
    return {
        "structure": str(r.structure),
        "groups": _groups_text(r.groups),
        "prices": list(r.prices),
        "qualities": list(r.expected_qualities),
        "demands": list(r.demands),
        "supplies": list(r.supplies),
        "cutoffs": list(r.cutoffs),
        "revenue": r.revenue,
        "implementable": r.implementable,
        "residual": r.clearing_residual,
        "diagnostic": r.diagnostic,
    }


def _price_row(o: price_model.BertrandOutcome) -> dict:
    hint = o.pruned_hint
    return {
        "structure": str(o.structure),
        "groups": _groups_text(o.groups),
        "participants": [f"A{b + 1}" for b in o.participants],
        "prices": list(o.prices),
        "qualities": list(o.qualities),
        "demands": list(o.demands),
        "cutoffs": list(o.cutoffs),
        "revenue": o.revenue,
        "implementable": o.implementable,
        "hint": str(hint) if hint is not None else "",
    }


def _menu_row(menu_id: str, menu: Menu, dist) -> dict:
    split = demand_split(menu, dist)
    return {
        "menu_id": menu_id,
        "k": len(menu),
        "prices": menu.prices.tolist(),
        "qualities": menu.qualities.tolist(),
        "cutoffs": list(split.cutoffs),
        "demands": list(split.demands),
        "revenue": menu_revenue(menu, dist),
    }


def _need_model(spec: MarketSpec, model: str) -> None:
    if spec.model != model:
        raise ValidationError(f"this command needs a '{model}' model section; the file has '{spec.model}'")


def _structure(args, spec: MarketSpec) -> InformationStructure:
    if not args.structure:
        raise ValidationError("--structure is required, e.g. --structure '{A1,A2}|{A3}'")
    s = InformationStructure.parse(args.structure)
    s.check_against(spec.pop)
    return s


def _opt(args, spec: MarketSpec, name: str, default):
    v = getattr(args, name, None)
    return v if v is not None else spec.options.get(name, default)


# commands


def cmd_check(args, spec: MarketSpec) -> tuple[Report, int]:
    rep = Report("check", spec, ["key", "value"])
    dist = spec.dist
    a, b = dist.support
    cls = classify_Fm_convexity(dist, a, b)
    emin, emax = elasticity_range(dist, a, b)
    rep.results.update(distribution=dist.to_dict(), Fm_convexity=cls.value, elasticity_range=[emin, emax])
    rep.lines += [f"buyers: {dist}", f"F(m)m: {cls.value}", f"density elasticity range: [{emin:.6g}, {emax:.6g}]"]
    rows = [("Fm_convexity", cls.value), ("elasticity_min", emin), ("elasticity_max", emax)]
    cap = _opt(args, spec, "cap", 10)
    if spec.model == "quantity":
        market = spec.market
        cond = quantity_model.check_supply_condition(market)
        applies = cls.value == "StrictlyConvex" and cond.holds
        detail = f"S={cond.supply_at_pM:.6g} vs D={cond.demand_at_pM:.6g} at p_M={cond.p_M:.6g} for A{cond.B_H + 1}"
        if cond.closed_form_sum is not None:
            rel = ">=" if cond.closed_form_sum >= 1 else "<"
            detail = f"{cond.closed_form_sum:.6g} {rel} 1; " + detail
        rep.lines.append(f"supply condition: {'holds' if cond.holds else 'fails'} ({detail})")
        rep.lines.append(f"regular-case prediction (single block wins): {'applies' if applies else 'does not apply'}")
        table = quantity_model.solve_all(enumerate_structures(spec.pop, cap), market, _opt(args, spec, "jobs", 1))
        menus = tuple(r.menu for r in table if r.implementable)
        rows += [
            ("B_H", f"A{cond.B_H + 1}"),
            ("p_eq_B_H", cond.p_eq),
            ("p_M", cond.p_M),
            ("supply_at_pM", cond.supply_at_pM),
            ("demand_at_pM", cond.demand_at_pM),
            ("supply_condition", cond.holds),
            ("closed_form_sum", cond.closed_form_sum),
            ("regular_case_applies", applies),
        ]
        rep.results.update(
            supply_condition={
                "B_H": f"A{cond.B_H + 1}",
                "p_eq": cond.p_eq,
                "p_M": cond.p_M,
                "supply_at_pM": cond.supply_at_pM,
                "demand_at_pM": cond.demand_at_pM,
                "holds": cond.holds,
                "closed_form_sum": cond.closed_form_sum,
            },
            regular_case_applies=applies,
        )
    else:
        menus = price_model.constraint_set(spec.market, cap).menus
    reg = check_regularity(ConstraintSet(menus), dist)
    rep.lines.append(
        f"regularity of induced menus: (i) {'holds' if reg.condition_i else 'fails'}, (ii) {'holds' if reg.condition_ii else 'fails'}"
        + (f" [{reg.reason}]" if reg.reason else "")
    )
    rows += [("regularity_i", reg.condition_i), ("regularity_ii", reg.condition_ii), ("induced_menus", len(menus))]
    rep.results.update(regularity={"condition_i": reg.condition_i, "condition_ii": reg.condition_ii, "reason": reg.reason})
    rep.rows = [{"key": k, "value": v} for k, v in rows]
    return rep, EXIT_OK


def cmd_solve_quantity(args, spec: MarketSpec) -> tuple[Report, int]:
    _need_model(spec, "quantity")
    s = _structure(args, spec)
    res = quantity_model.solve_equilibrium(s, spec.market)
    rep = Report("solve-quantity", spec, QTY_COLUMNS)
    rep.rows = [_qty_row(res)]
    rep.lines += [
        f"structure: {s}",
        f"implementable: {res.implementable}",
    ]
    if res.implementable:
        rep.lines += [
            f"prices: {_fmt(res.prices)}",
            f"expected qualities: {_fmt(res.expected_qualities)}",
            f"demands: {_fmt(res.demands)}",
            f"supplies: {_fmt(res.supplies)}",
            f"cutoffs: {_fmt(res.cutoffs)}",
            f"revenue: {res.revenue:.6g}",
            f"clearing residual: {res.clearing_residual:.3g} ({res.iterations} Newton iterations)",
        ]
        return rep, EXIT_OK
    rep.diagnostics.append(res.diagnostic)
    return rep, EXIT_NOT_IMPLEMENTABLE


def cmd_solve_price(args, spec: MarketSpec) -> tuple[Report, int]:
    _need_model(spec, "price")
    s = _structure(args, spec)
    out = price_model.bertrand_menu(s, spec.market)
    rep = Report("solve-price", spec, PRICE_COLUMNS)
    rep.rows = [_price_row(out)]
    rep.lines += [
        f"structure: {s}",
        f"implementable: {out.implementable}",
        f"participating blocks: {', '.join(f'A{b + 1}' for b in out.participants)}",
        f"prices: {_fmt(out.prices)}",
        f"qualities: {_fmt(out.qualities)}",
        f"demands: {_fmt(out.demands)}",
        f"revenue: {out.revenue:.6g}",
    ]
    if out.implementable:
        return rep, EXIT_OK
    hint = out.pruned_hint
    rep.diagnostics.append("a group sells nothing at the Bertrand prices" + (f"; try {hint}" if hint else ""))
    return rep, EXIT_NOT_IMPLEMENTABLE


def _winner_label(structure: InformationStructure, n_blocks: int) -> str:
    if structure == InformationStructure.full_disclosure(n_blocks) and n_blocks > 1:
        return f"{structure} (full disclosure)"
    return str(structure)


def cmd_search_quantity(args, spec: MarketSpec) -> tuple[Report, int]:
    _need_model(spec, "quantity")
    rep_ = quantity_model.search_optimal_structure(spec.market, _opt(args, spec, "cap", 10), _opt(args, spec, "jobs", 1))
    rep = Report("search-quantity", spec, QTY_COLUMNS)
    rep.rows = [_qty_row(r) for r in rep_.table]
    w = rep_.winner
    cond = rep_.supply_condition
    rep.results.update(
        winner=str(w.structure),
        revenue=w.revenue,
        strictly_convex=rep_.strictly_convex,
        supply_condition=None if cond is None else cond.holds,
        regular_case_applies=rep_.regular_case_applies,
        winner_is_1_separating=rep_.winner_is_1_separating,
        winner_block_in_Io=rep_.winner_block_in_Io,
        winner_maximal=rep_.winner_maximal,
    )
    rep.diagnostics += list(rep_.notes)
    rep.lines.append(f"{'structure':<24}{'revenue':>12}  prices")
    for r in rep_.table:
        rev = f"{r.revenue:.6f}" if r.implementable else "n/a"
        rep.lines.append(f"{str(r.structure):<24}{rev:>12}  {_fmt(r.prices) if r.implementable else r.diagnostic}")
    rep.lines += [
        f"winner: {_winner_label(w.structure, spec.pop.n_blocks)}, revenue {w.revenue:.6f}",
        f"regular case (strictly convex F(m)m and supply condition): {'yes' if rep_.regular_case_applies else 'no'}",
        f"winner is a single block: {rep_.winner_block_in_Io}; maximal among single-group menus: {rep_.winner_maximal}",
    ]
    return rep, EXIT_OK


def cmd_search_price(args, spec: MarketSpec) -> tuple[Report, int]:
    _need_model(spec, "price")
    rep_ = price_model.search_optimal_structure(spec.market, _opt(args, spec, "cap", 10), _opt(args, spec, "jobs", 1))
    rep = Report("search-price", spec, PRICE_COLUMNS)
    rep.rows = [_price_row(o) for o in rep_.table]
    w = rep_.winner
    label = "full disclosure" if rep_.winner_is_full_disclosure else str(w.structure)
    rep.results.update(
        winner=str(w.structure),
        winner_label=label,
        revenue=w.revenue,
        menu=[list(p) for p in w.menu.pairs],
        convex=rep_.convex,
        best_1_separating=rep_.best_1_separating,
        prediction_holds=rep_.prediction_holds,
        winner_is_top_block=rep_.winner_is_top_block,
    )
    rep.lines.append(f"{'structure':<24}{'revenue':>12}  menu")
    for o in rep_.table:
        rev = f"{o.revenue:.6f}" if o.implementable else "n/a"
        rep.lines.append(f"{str(o.structure):<24}{rev:>12}  {o.menu}")
    rep.lines.append(f"winner: {label}, revenue {w.revenue:.6f}")
    if rep_.convex:
        rep.lines.append(f"F(m)m convex: best single-group revenue {rep_.best_1_separating:.6f}")
    return rep, EXIT_OK


_PAIR_RE = re.compile(r"\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)")


def parse_menu(text: str) -> Menu:
    """Parse ``"(0.1,0.25);(0.5,0.75)"``."""
    parts = [p for p in (s.strip() for s in text.split(";")) if p]
    pairs = []
    for part in parts:
        m = _PAIR_RE.fullmatch(part)
        if m is None:
            raise ValidationError(f"cannot parse pair {part!r}; expected (price,quality)")
        try:
            pairs.append((float(m.group(1)), float(m.group(2))))
        except ValueError:
            raise ValidationError(f"non-numeric pair {part!r}") from None
    if not pairs:
        raise ValidationError("empty menu")
    try:
        return Menu(tuple(pairs))
    except DomainError as exc:
        raise ValidationError(str(exc)) from None


def cmd_compare(args, spec: MarketSpec) -> tuple[Report, int]:
    if not args.menu or not args.sub:
        raise ValidationError("compare needs --menu and --sub, e.g. --menu '(0.1,0.25);(0.5,0.75)' --sub '(0.5,0.75)'")
    menu, sub = parse_menu(args.menu), parse_menu(args.sub)
    try:
        cmp_ = compare_submenu(menu, sub, spec.dist)
    except DomainError as exc:
        raise ValidationError(str(exc)) from None
    rep = Report("compare", spec, MENU_COLUMNS)
    rep.rows = [_menu_row("menu", menu, spec.dist), _menu_row("sub", sub, spec.dist)]
    rep.results.update(
        verdict=cmp_.verdict.value,
        revenue_menu=cmp_.revenue_menu,
        revenue_sub=cmp_.revenue_sub,
        intervals=[list(iv) for iv in cmp_.intervals],
        classes=[c.value for c in cmp_.classes],
        keeps_top=cmp_.keeps_top,
        consistent=cmp_.consistent,
    )
    if not cmp_.keeps_top:
        rep.diagnostics.append("submenu drops the top pair or a pair without demand; no prediction")
    rep.lines += [
        f"menu {menu}: revenue {cmp_.revenue_menu:.6f}",
        f"sub  {sub}: revenue {cmp_.revenue_sub:.6f}",
    ]
    for (lo, hi), c in zip(cmp_.intervals, cmp_.classes):
        rep.lines.append(f"merged range [{lo:.6g}, {hi:.6g}]: F(m)m {c.value}")
    rep.lines.append(f"verdict: {cmp_.verdict.value} (revenues {'agree' if cmp_.consistent else 'DISAGREE'})")
    return rep, EXIT_OK


def cmd_verify(args, spec: MarketSpec) -> tuple[Report, int]:
    cfg = oracle.OracleConfig(
        samples=_opt(args, spec, "samples", 10**6),
        seed=_opt(args, spec, "seed", 0),
        grid_resolution=spec.options.get("grid_resolution", 1e-4),
    )
    cap = _opt(args, spec, "cap", 10)
    rep = Report("verify", spec, ["check", "passed", "detail"])
    checks: list[tuple[str, bool, str]] = []
    structures = enumerate_structures(spec.pop, cap)
    menus: list[tuple[str, Menu]] = []
    if spec.model == "quantity":
        for s in structures:
            res = quantity_model.solve_equilibrium(s, spec.market)
            if not res.implementable:
                continue
            menus.append((str(s), res.menu))
            if res.n_groups <= 2:
                try:
                    grid = oracle.grid_equilibrium(s, spec.market, cfg)
                    gap = float(np.max(np.abs(grid - np.asarray(res.prices))))
                    checks.append((f"grid_equilibrium {s}", gap < 1e-6, f"max |dp| = {gap:.3g}"))
                except NotImplementableError as exc:
                    checks.append((f"grid_equilibrium {s}", False, str(exc)))
            checks.append((f"clearing {s}", res.clearing_residual < 1e-8, f"residual {res.clearing_residual:.3g}"))
    else:
        for s in structures:
            out = price_model.bertrand_menu(s, spec.market)
            if not out.implementable:
                continue
            menus.append((str(s), out.menu))
            ok = oracle.bertrand_deviation_check(s, spec.market, [spec.market.costs[min(g)] for g in s.groups])
            checks.append((f"bertrand_deviation {s}", ok, "no profitable eps-deviation" if ok else "profitable deviation"))
    for name, menu in menus:
        est = oracle.mc_demand(menu, spec.dist, cfg)
        analytic = demand_split(menu, spec.dist).demands
        ok = bool(np.all(est.within(analytic)))
        z = np.abs(np.asarray(analytic) - est.demands) / np.maximum(est.stderr, 1.0 / est.samples)
        checks.append((f"mc_demand {name}", ok, f"max |z| = {float(z.max()):.2f}"))
    rep.rows = [{"check": c, "passed": p, "detail": d} for c, p, d in checks]
    rep.lines += [f"{'PASS' if p else 'FAIL'}  {c}: {d}" for c, p, d in checks]
    failed = sum(not p for _, p, _ in checks)
    rep.results.update(checks=len(checks), failed=failed)
    rep.lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return rep, EXIT_OK if failed == 0 else EXIT_VERIFY


COMMANDS: dict[str, Callable] = {
    "check": cmd_check,
    "solve-quantity": cmd_solve_quantity,
    "solve-price": cmd_solve_price,
    "search-quantity": cmd_search_quantity,
    "search-price": cmd_search_price,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="market file (JSON)")
    common.add_argument("--format", choices=["text", "csv", "json"], default="text")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--jobs", type=int, default=None, help="worker processes for structure searches")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--cap", type=int, default=None, help="maximum number of blocks to enumerate")
    common.add_argument("--samples", type=int, default=None, help="Monte Carlo sample count for verify")

    parser = argparse.ArgumentParser(prog="qualsel", description="Equilibria and revenue-optimal disclosure in two-sided markets.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check": "classify F(m)m, test the supply condition and regularity",
        "solve-quantity": "equilibrium of one structure in the quantity model",
        "solve-price": "Bertrand outcome of one structure in the price model",
        "search-quantity": "revenue of every structure in the quantity model",
        "search-price": "revenue of every structure in the price model",
        "compare": "predict and check whether a submenu earns more than a menu",
        "verify": "cross-check analytic results against brute-force oracles",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name.startswith("solve"):
            p.add_argument("--structure", help="groups such as '{A1,A2}|{A3}'")
        if name == "compare":
            p.add_argument("--menu", help="pairs such as '(0.1,0.25);(0.5,0.75)'")
            p.add_argument("--sub", help="submenu in the same syntax")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = parse_spec(args.spec)
        report, code = COMMANDS[args.command](args, spec)
    except OSError as exc:
        print(f"error: cannot read {args.spec}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print("invalid input:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_INVALID
    except NotImplementableError as exc:
        print(f"not implementable: {exc}", file=sys.stderr)
        return EXIT_NOT_IMPLEMENTABLE
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = report.render(args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
