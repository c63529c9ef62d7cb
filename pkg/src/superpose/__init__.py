"""Constructive superposition representations f(x) = sum_q g(sum_p lambda_p phi_q(x_p))."""
from .constants import Params, ParameterRejected, derive
from .engine import Representation, StageAbort, StopRule, eval_representation, run, unwrap
from .family import InnerFamily
from .plfun import PL1D, PlateauFunction
from .targets import TargetFunction, target_by_name, wrap_unbounded

__all__ = [
    "Params", "ParameterRejected", "derive", "Representation", "StageAbort", "StopRule",
    "eval_representation", "run", "unwrap", "InnerFamily", "PL1D", "PlateauFunction",
    "TargetFunction", "target_by_name", "wrap_unbounded",
]
