"""Expression language and jet arithmetic."""

from .expr import (
    Expr,
    ExprError,
    ParseError,
    UnknownSymbolError,
    diff_expr,
    evaluate,
    free_symbols,
    parse_expr,
    substitute,
    to_text,
)
from .jet import Jet, JetDomainError, JetOrderError, JetSpace, contract, jet_space
from .evaluate import eval_jet, expr_jet

# the submodule import above binds the name ``evaluate``; restore the function
from .expr import evaluate  # noqa: E402,F811

__all__ = [
    "Expr",
    "ExprError",
    "ParseError",
    "UnknownSymbolError",
    "diff_expr",
    "evaluate",
    "free_symbols",
    "parse_expr",
    "substitute",
    "to_text",
    "Jet",
    "JetDomainError",
    "JetOrderError",
    "JetSpace",
    "contract",
    "jet_space",
    "eval_jet",
    "expr_jet",
]
