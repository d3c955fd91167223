"""Estimate and compare latent machine quality in layered production networks.

Only the additive end quality of each part and its route (one machine per
workstation column) are observed. qnet estimates, per machine, the conditional
mean and variance of the end quality, whose within-column differences
consistently estimate the differences of the machines' own means and
variances, and tests them for anomalies.
"""
__version__ = "0.1.0"

from qnet.errors import QnetError  # noqa: E402
from qnet.network import (  # noqa: E402
    NetworkTopology,
    PathRecord,
    indicator_matrix,
    path_count,
    sample_path,
    validate_topology,
)
from qnet.quality import (  # noqa: E402
    Dataset,
    NodeDistribution,
    Observation,
    QualityModel,
    demo_model,
    draw_path_quality,
    generate_dataset,
    theoretical_moments,
)
from qnet.estimators import (  # noqa: E402
    EstimatorState,
    Estimates,
    estimate,
    finalize,
    init_state,
    mean_difference,
    merge,
    update,
    variance_difference,
)
from qnet.inference import (  # noqa: E402
    ColumnComparisonReport,
    TestResult,
    bartlett_test,
    by_adjust,
    column_report,
    mean_diff_test,
    variance_diff_test,
)
from qnet.numerics import RandomStream  # noqa: E402
