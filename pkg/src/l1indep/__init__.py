"""L1-distance kernel test of mutual independence between random vectors."""

__version__ = "0.1.0"

from .data import BlockSpec, DataError, Sample, block_view, load_csv, write_csv
from .kernel import Kernel
from .estimators import Bandwidths, g_n, joint_kde, l_hat, loo_fields, marginal_kde, v_hat
from .variance import VarianceParams, phi, sigma_sq, variance_params
from .statistic import (
    QuadratureGrid,
    Region,
    TestConfig,
    TestResult,
    a_n_region,
    make_grid,
    permutation_calibrate,
    run_test,
    select_region,
    v_n_region,
)
from .bandwidth import BandwidthGrid, CriterionError, bandwidth_grid, loo_criterion, select_bandwidths, select_constants
from .simgen import Scenario, density_oracle, sample_scenario
from ._backend import BACKEND
