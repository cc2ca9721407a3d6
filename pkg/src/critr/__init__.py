"""critr: doubly-robust individualized treatment regimes for clustered
survival data with competing risks."""

from .bootstrap import BootstrapResult, cluster_bootstrap, percentile_ci
from .data import Dataset, ModelSpec, SubjectRecord, build_design, load_dataset, load_model_spec, save_dataset
from .gee import GeeFit, WorkingCorrelation, exchangeable_solve, fit_weighted_gee, gls_step, moment_update, sandwich_se
from .glm import CauseModel, LogisticFit, fit_cause_model, fit_logistic, predict_prob
from .metrics import RegimeMetrics, estimate_pot, estimate_value, ipc_weights, regime_metrics
from .regimes import (
    BenefitCurve,
    NuisanceModels,
    RegimeSet,
    SimpleRule,
    benefit_curve,
    benefit_greedy,
    benefit_oracle,
    benefit_weighted,
    cause_specific_regime,
    composite_regime,
    decide,
    estimate_blips,
    fit_nuisance,
    greedy_rule,
    oracle_rule,
    treatment_dependent_weighted_rule,
    uniform_regime,
    weighted_rule,
)
from .sim import (
    SETTINGS,
    SimDataset,
    SimSetting,
    StudyConfig,
    StudyResult,
    run_replication_study,
    scenario_spec,
    simulate_dataset,
    true_regime_set,
)
from .weights import WeightVector, check_balancing, ipw_weights, overlap_weights

__version__ = "0.1.0"
