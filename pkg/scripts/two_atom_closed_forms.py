"""Two-atom uniform market: solver output next to hand-derived closed forms.

Sweeps the atom mass and prints, per structure, the computed equilibrium
price, the closed form X / (W (1 + X)) for single-group structures, and the
revenue. The crossover where two groups start beating the top block shows
up as the mass falls.

    python scripts/two_atom_closed_forms.py --masses 0.25 0.5 1 2 4
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from qualsel.dist import Uniform
from qualsel.population import SellerPopulation, enumerate_structures
from qualsel.pricedisc import monopoly_price
from qualsel.quantity_model import QuantityMarket, check_supply_condition, solve_equilibrium


def market(mass: float) -> QuantityMarket:
    pop = SellerPopulation.from_blocks([[(0.25, mass)], [(0.75, mass)]])
    return QuantityMarket(Uniform((0.0, 1.0)), pop, 1.0, 1.0)


def rows(mass: float):
    m = market(mass)
    cond = check_supply_condition(m)
    for s in enumerate_structures(m.pop):
        res = solve_equilibrium(s, m)
        closed = ""
        if s.n_groups == 1:
            ids = m.pop.atoms_of(s.groups[0])
            w = np.array([m.pop.atoms[i].mass for i in ids])
            X = float(w @ [m.pop.atoms[i].quality for i in ids])
            closed = X / (w.sum() * (1.0 + X))
        yield {
            "mass": mass,
            "structure": str(s),
            "prices": " ".join(f"{p:.10g}" for p in res.prices),
            "closed_form": closed if closed == "" else f"{closed:.10g}",
            "revenue": f"{res.revenue:.10g}" if res.implementable else "",
            "p_M_top": f"{monopoly_price(0.75, m.dist):.10g}",
            "supply_condition": cond.holds,
        }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--masses", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0])
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args(argv)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = None
    for mass in args.masses:
        for row in rows(mass):
            if w is None:
                w = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\n")
                w.writeheader()
            w.writerow(row)
    if args.out:
        fh.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
