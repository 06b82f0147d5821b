"""Compound Laplace mechanism: Laplace noise whose inverse scale ``1/b`` is itself random.

The privacy guarantee and utility metrics all follow from the moment
generating function of ``1/b``; this package evaluates them, searches for
good distributions at a target epsilon, releases noisy query answers, and
checks every analytic formula against independent numerical oracles.
"""

from compound_laplace.distributions import (
    Bernoulli,
    Degenerate,
    DistributionSpec,
    Gamma,
    SpecError,
    Term,
    TruncGauss,
    Uniform,
    log_mgf,
    log_mgf_deriv,
    mgf,
    mgf_deriv,
    sample_inv_b,
)
from compound_laplace.mechanism import QueryJob, ReleaseRecord, release, sensitivity
from compound_laplace.optimizer import (
    InfeasibleError,
    OptimizationProblem,
    OptimizationResult,
    optimize,
    optimize_combined,
    optimize_single,
)
from compound_laplace.privacy import (
    analyze_privacy,
    eps_avg_leakage,
    eps_closed_form,
    eps_general,
    gamma_threshold,
    necessary_condition,
)
from compound_laplace.utility import (
    analyze_utility,
    cdf_noise,
    entropy_table,
    entropy_true,
    l1_error,
    l2_error,
    pdf_noise,
    usefulness,
)
from compound_laplace.verify import (
    certify_privacy,
    certify_privacy_sampled,
    certify_utility,
    regression_corpus,
    verify_spec,
)

__all__ = [
    "Bernoulli",
    "Degenerate",
    "DistributionSpec",
    "Gamma",
    "InfeasibleError",
    "OptimizationProblem",
    "OptimizationResult",
    "QueryJob",
    "ReleaseRecord",
    "SpecError",
    "Term",
    "TruncGauss",
    "Uniform",
    "analyze_privacy",
    "analyze_utility",
    "cdf_noise",
    "certify_privacy",
    "certify_privacy_sampled",
    "certify_utility",
    "entropy_table",
    "entropy_true",
    "eps_avg_leakage",
    "eps_closed_form",
    "eps_general",
    "gamma_threshold",
    "l1_error",
    "l2_error",
    "log_mgf",
    "log_mgf_deriv",
    "mgf",
    "mgf_deriv",
    "necessary_condition",
    "optimize",
    "optimize_combined",
    "optimize_single",
    "pdf_noise",
    "regression_corpus",
    "release",
    "sample_inv_b",
    "sensitivity",
    "usefulness",
    "verify_spec",
]
