"""D-optimal experimental design on implicit response-surface instances."""
from .bnb import BnbOptions, solve_exact
from .infomat import InfoMatrix, RankDeficientError, SingularError, build_info
from .instance import (AstronomicalIndexError, CapacityError, Design, InstanceError, ModelSpec, decode_point,
                       encode_point, expand_row, make_model_spec, materialize_dense, parse_spec)
from .localsearch import InfeasibleError, SearchOptions, best_exchange, initial_design, local_search
from .oracle import PricingResult, price
from .relax import (BoundReport, DualCertificate, RelaxOptions, RowPool, complete_certificate,
                    natural_bound_rowgen, solve_restricted)

__version__ = "0.1.0"

__all__ = [
    "AstronomicalIndexError", "BnbOptions", "BoundReport", "CapacityError", "Design", "DualCertificate",
    "InfeasibleError", "InfoMatrix", "InstanceError", "ModelSpec", "PricingResult", "RankDeficientError",
    "RelaxOptions", "RowPool", "SearchOptions", "SingularError", "best_exchange", "build_info",
    "complete_certificate", "decode_point", "encode_point", "expand_row", "initial_design", "local_search",
    "make_model_spec", "materialize_dense", "natural_bound_rowgen", "parse_spec", "price", "solve_exact",
    "solve_restricted",
]
