from picse_match.effect.estimate import EffectEstimate, FineStratification, SetTable, WeightScheme, psi_value, set_table, tau_hat
from picse_match.effect.oracle import (
    MspsCheck,
    assignment_distribution,
    assignment_probs,
    discrepancy_bound,
    max_matched_spread,
    msps_err_check,
    oracle_root,
    psi_tilde_value,
)

__all__ = [
    "EffectEstimate",
    "FineStratification",
    "MspsCheck",
    "SetTable",
    "WeightScheme",
    "assignment_distribution",
    "assignment_probs",
    "discrepancy_bound",
    "max_matched_spread",
    "msps_err_check",
    "oracle_root",
    "psi_tilde_value",
    "psi_value",
    "set_table",
    "tau_hat",
]
