"""Simulation, certification, and synthesis for randomly switched systems
driven by disturbances.

The package covers the full workflow: describe a mode family and its
switching law (``model``, ``switching``), integrate sample paths (``sim``),
certify expectation decay from a multiple-Lyapunov family (``lyapunov``,
``certify``), falsify or corroborate the certified bounds by Monte Carlo
(``montecarlo``), and synthesize stabilizing mode-dependent feedback
(``synthesis``). ``switchstab`` on the command line drives everything from a
single JSON document.
"""

from .model import (
    DisturbanceSignal,
    PowerGain,
    SwitchedSystem,
    eval_field,
    eval_gain,
    make_linear_system,
)
from .switching import (
    ClassGParams,
    CTMCParams,
    EnvelopeReport,
    SwitchingPath,
    UHParams,
    check_envelope,
    count_jumps,
    sample_class_g_path,
    sample_ctmc_path,
    sample_uh_path,
)
from .sim import BlowUpError, SwitchSample, Trajectory, integrate, order_check
from .lyapunov import (
    DecrementReport,
    InfeasibleCertificate,
    LyapunovFamily,
    check_decrement,
    eval_V,
    eval_V_batch,
    exact_mu,
    grad_V,
    linear_rate_certificate,
    sobol_ball,
)
from .certify import (
    CertificateReport,
    markov_generator_check,
    phi0,
    slow_switching_certificate,
    uh_bound,
    uh_certificate,
    uh_contraction,
    uh_gain_scale,
    uniform_decay_residual,
    uniform_exp_mean,
)
from .montecarlo import (
    BatchResult,
    BatchSpec,
    BoundednessCheck,
    EnvelopeCheck,
    ExcursionRecord,
    IssVerdict,
    RegimeSpec,
    audit_batch,
    audit_iterated_inequality,
    detect_excursions,
    markov_boundedness,
    run_batch,
    verify_class_g_envelope,
    verify_iss_l1,
)
from .synthesis import (
    Controller,
    DecrementTargetPolicy,
    assemble_closed_loop,
    check_closed_loop,
    control_lie_derivatives,
    decrement_target,
    make_linear_feedback,
    make_mode_dependent,
    universal_formula,
)
from .config import ConfigError, ExperimentConfig, load_config, loads_config

__version__ = "0.1.0"

__all__ = [
    "PowerGain", "DisturbanceSignal", "SwitchedSystem", "make_linear_system",
    "eval_field", "eval_gain",
    "SwitchingPath", "UHParams", "ClassGParams", "CTMCParams", "EnvelopeReport",
    "sample_uh_path", "sample_class_g_path", "sample_ctmc_path", "check_envelope",
    "count_jumps",
    "Trajectory", "SwitchSample", "BlowUpError", "integrate", "order_check",
    "LyapunovFamily", "DecrementReport", "InfeasibleCertificate", "eval_V",
    "eval_V_batch", "grad_V", "exact_mu", "check_decrement",
    "linear_rate_certificate", "sobol_ball",
    "CertificateReport", "phi0", "uniform_exp_mean", "uniform_decay_residual",
    "uh_contraction", "uh_gain_scale", "uh_certificate", "uh_bound",
    "slow_switching_certificate", "markov_generator_check",
    "BatchSpec", "BatchResult", "RegimeSpec", "run_batch", "IssVerdict",
    "verify_iss_l1", "audit_iterated_inequality", "audit_batch",
    "ExcursionRecord", "detect_excursions", "EnvelopeCheck",
    "verify_class_g_envelope", "BoundednessCheck", "markov_boundedness",
    "Controller", "DecrementTargetPolicy", "universal_formula",
    "control_lie_derivatives", "decrement_target", "make_mode_dependent",
    "make_linear_feedback", "check_closed_loop", "assemble_closed_loop",
    "ConfigError", "ExperimentConfig", "load_config", "loads_config",
    "__version__",
]
