"""Dependent sensitivity indices, Shapley effects and derivative-based bounds
for models of correlated Gaussian inputs."""

from dsikit.bounds import (
    BoundReport,
    bound_report,
    dub,
    dub_independent,
    dub_prime,
    ej_factor,
    ej_truncated,
)
from dsikit.combinatorics import (
    covering_permutations,
    hockey_stick_check,
    shapley_weight,
    subsets_excluding,
    symmetric_plan,
)
from dsikit.dependency import build_dm, dm_apply, dm_from_covariance, jacobian_column, plan_for
from dsikit.errors import *  # noqa: F401,F403
from dsikit.indices import IndexReport, dsi, full_report, shapley_exact, shapley_sampled, sobol
from dsikit.inputs import (
    GaussianInputSpec,
    ModelHandle,
    Partition,
    build_input_spec,
    custom_model,
    register_builtin_model,
)
from dsikit.variance import (
    EstimatorConfig,
    VarianceEstimate,
    conditional_variance_V,
    gsi_total_of_dm,
    output_variance,
    sf_variances,
)

__version__ = "0.1.0"
