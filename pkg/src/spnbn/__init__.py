"""Sum-product networks, their normal form, and conversion to and from Bayesian networks."""

from .add import Add, multiply, sum_out
from .bn import BayesNet, bn_marginal, check_csi, to_bn
from .errors import SpnError
from .formats import export_dot, parse_bn, parse_spn, serialize_bn, serialize_spn
from .harness import GenConfig, generate, scaling_probe
from .normal_form import to_normal
from .spn_core import (
    SpnBuilder,
    SpnGraph,
    Variable,
    distribution,
    partition_function,
    query,
    spn_size,
    validate,
)
from .ve import eliminate, roundtrip, symbolic_to_spn

__all__ = [
    "Add",
    "BayesNet",
    "GenConfig",
    "SpnBuilder",
    "SpnError",
    "SpnGraph",
    "Variable",
    "bn_marginal",
    "check_csi",
    "distribution",
    "eliminate",
    "export_dot",
    "generate",
    "multiply",
    "parse_bn",
    "parse_spn",
    "partition_function",
    "query",
    "roundtrip",
    "scaling_probe",
    "serialize_bn",
    "serialize_spn",
    "spn_size",
    "sum_out",
    "symbolic_to_spn",
    "to_bn",
    "to_normal",
    "validate",
]
