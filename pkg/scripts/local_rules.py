"""Tally the local submenu rules on random menus, per distribution family.

For every menu and every submenu that keeps the top pair, the convexity of
F(m) m on the merged cutoff ranges predicts whether dropping pairs helps.
The script counts decided and undecided comparisons and checks each decided
sign against exact revenues.

    python scripts/local_rules.py --menus 500 --seed 3
"""

from __future__ import annotations

import argparse
import collections
import itertools
import sys

import numpy as np

from qualsel.generators import random_Cp_menu, random_distribution
from qualsel.pricedisc import SubmenuVerdict, compare_submenu, menu_revenue

FAMILIES = ["Uniform", "Power", "Beta", "ParetoTruncated"]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--menus", type=int, default=200, help="menus per family")
    ap.add_argument("--max-pairs", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'family':<16}{'compared':>10}{'sub>':>8}{'menu>':>8}{'undecided':>11}{'wrong':>7}  worst miss")
    bad = 0
    for family in FAMILIES:
        tally = collections.Counter()
        worst = 0.0
        for _ in range(args.menus):
            dist = random_distribution(rng, family)
            menu = random_Cp_menu(rng, dist, int(rng.integers(2, args.max_pairs + 1)))
            k = len(menu)
            for r in range(1, k):
                for keep in itertools.combinations(range(k - 1), r - 1):
                    sub = menu.subset(list(keep) + [k - 1])
                    c = compare_submenu(menu, sub, dist)
                    tally["compared"] += 1
                    tally[c.verdict] += 1
                    diff = menu_revenue(sub, dist) - menu_revenue(menu, dist)
                    if c.verdict is SubmenuVerdict.SUB_BETTER:
                        worst = min(worst, diff)
                        tally["wrong"] += diff < -1e-12
                    elif c.verdict is SubmenuVerdict.MENU_BETTER:
                        worst = min(worst, -diff)
                        tally["wrong"] += diff > 1e-12
        bad += tally["wrong"]
        print(
            f"{family:<16}{tally['compared']:>10}{tally[SubmenuVerdict.SUB_BETTER]:>8}"
            f"{tally[SubmenuVerdict.MENU_BETTER]:>8}{tally[SubmenuVerdict.INDETERMINATE]:>11}{tally['wrong']:>7}  {worst:.2e}"
        )
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
