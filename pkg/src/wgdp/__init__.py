"""Differentially private worst-group risk minimization.

The package covers three solver families over a shared problem layer:
phased regularized ERM on fresh samples, an online two-player game with a
private first-order player and a bandit group player, and noisy SGD over
fixed datasets with group reweighting or noisy-argmax group selection.
"""

from .errors import (
    BudgetExhaustedError,
    ContractViolationError,
    DegenerateWeightError,
    NonConvergenceError,
    UnsupportedModeError,
)
from .numkit import (
    RandomStream,
    categorical_from_uniform,
    check_simplex,
    in_l2_ball,
    neg_entropy,
    project_l2_ball,
    sample_categorical,
    softmax_weights,
    uniform_in_ball,
)
from .problem import (
    DatasetCollection,
    DiscreteDistribution,
    Instance,
    LossSpec,
    ParamSpace,
    SampleOracleSet,
    SamplerDistribution,
    build_hard_instance,
    build_two_point_instance,
    collection_hamming,
    draw_collection,
    empirical_risk,
    group_risks,
    instance_from_json,
    instance_to_json,
    make_loss,
    make_neighbor,
    make_shifted_loss,
    population_risk,
    population_risk_mc,
    random_affine_instance,
    worst_group_risk,
)
from .mechanisms import (
    TreeNoiseAggregator,
    calibrate_composed_budget,
    gaussian_noise,
    laplace_noise,
    phased_noise_sigma,
    report_noisy_max,
)
from .saddle import (
    BaselineResult,
    DualityGap,
    RegularizedObjective,
    SaddleSolution,
    StabilityReport,
    duality_gap,
    iterations_for_alpha,
    nonprivate_baseline,
    solve_sc_sc,
    stability_alpha,
    stability_bound,
    stability_probe,
    apriori_gap_bound,
)
from .phased_erm import (
    PhasedResult,
    PhasedSchedule,
    default_eta,
    make_schedule,
    phase_sensitivity_probe,
    run_phased_erm,
)
from .online import (
    DpFtrlPlayer,
    GameConfig,
    GameResult,
    exp3_update,
    make_game_config,
    run_game,
    tree_node_sigma,
)
from .empirical import (
    NoisySgdConfig,
    NoisySgdResult,
    reweighting_default_params,
    run_reweighting,
    run_selection,
    selection_default_params,
)
from .harness import (
    CSV_COLUMNS,
    SCHEMA_VERSION,
    AuditReport,
    ExperimentConfig,
    build_instance,
    compute_baseline,
    evaluate_worst_risk,
    rows_to_csv,
    run_audit,
    run_suite,
    run_sweep,
    run_trial,
)

__version__ = "0.1.0"
