from picse_match.simlab.battery import BatteryResult, run_battery
from picse_match.simlab.dgp import DGPConfig, Truth, generate, replicate_rng
from picse_match.simlab.runner import run_replicates
from picse_match.simlab.verify import (
    Verdict,
    p_for,
    rate_study,
    summarize,
    trend_verdict,
    verify_c_rate,
    verify_chaos,
    verify_effect,
    verify_discrepancy_bound,
    verify_picse_consistency,
    verify_prop3,
)

__all__ = [
    "BatteryResult",
    "DGPConfig",
    "Truth",
    "Verdict",
    "generate",
    "p_for",
    "rate_study",
    "replicate_rng",
    "run_battery",
    "run_replicates",
    "summarize",
    "trend_verdict",
    "verify_c_rate",
    "verify_chaos",
    "verify_effect",
    "verify_discrepancy_bound",
    "verify_picse_consistency",
    "verify_prop3",
]
