"""Revenue-optimal disclosure of seller quality on two-sided platforms.

Buyers pick from a menu of (price, expected quality) pairs; the platform
chooses how finely to reveal seller quality, which fixes the menu through
market equilibrium. Two equilibrium models are provided, one where sellers
choose quantities and one where they compete on price.
"""

from .dist import (
    Beta,
    Convexity,
    ParetoTruncated,
    PiecewisePolyDensity,
    Power,
    TypeDistribution,
    Uniform,
    classify_Fm_convexity,
    make_distribution,
)
from .errors import ConvergenceError, DomainError, NotImplementableError, ValidationError
from .population import Atom, InformationStructure, SellerPopulation, conditional_mean, enumerate_structures
from .price_model import PriceMarket
from .pricedisc import ConstraintSet, Menu, demand_split, menu_revenue, monopoly_price, optimal_menu
from .quantity_model import QuantityMarket, solve_equilibrium

__version__ = "0.1.0"
