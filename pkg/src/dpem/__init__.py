"""Differentially private estimation toolkit.

Moment-perturbation private EM for Gaussian mixtures, one-shot private
factor analysis, private k-means, and a privacy-loss accountant with
linear, advanced, zCDP and moments-accountant composition.
"""

from .accountant import (
    CompositionPlan,
    MomentCurve,
    PrivacyBudget,
    advanced_compose,
    advanced_calibrate,
    calibrate,
    compose_trace,
    gaussian_moment,
    laplace_moment,
    linear_compose,
    linear_calibrate,
    ma_calibrate,
    ma_tail_epsilon,
    ma_total_moment,
    zcdp_calibrate,
    zcdp_calibrate_pure,
    zcdp_rho,
    zcdp_to_dp,
)
from .data import BoundedDataset, preprocess
from .dataio import (
    ExperimentResult,
    cv_split,
    load_csv,
    summarize,
    synth_mog,
    write_csv,
    write_results_jsonl,
    write_summary_csv,
)
from .dpem_mog import DpEmConfig, run_dpem_mog
from .errors import (
    DataError,
    DegenerateComponentError,
    DpemError,
    SingularCovarianceError,
    UnattainableBudgetError,
)
from .fa import (
    FAParams,
    SecondMoment,
    fa_average_log_likelihood,
    perturb_second_moment,
    run_fa_em,
    second_moment,
)
from .kmeans import Clustering, dplloyd, dpem_kmeans, lloyd, nicv
from .mechanisms import (
    AccountingTrace,
    MechanismSpec,
    TraceRecord,
    analyze_gauss_perturb,
    gaussian_sigma,
    laplace_scale,
    perturb_mean,
    perturb_simplex,
    psd_project,
)
from .mog import (
    MapPrior,
    MoGParams,
    Responsibilities,
    e_step,
    fit_em,
    init_params,
    log_likelihood,
    m_step_map,
    m_step_mle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
