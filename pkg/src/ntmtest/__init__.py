"""Non-overlapping Template Matching Test with exact inter-template dependence.

Counts template occurrences per block, computes NIST-style p-values, gives
the closed-form correlation between two templates and the joint law of
their p-values, and whitens a whole template battery into independent
test items.
"""

__version__ = "0.1.0"

from .bitstream import BitSequence, BlockSet, from_ascii, from_bytes, partition, read_file
from .generators import MT19937, GeneratorSpec, generate, seed_for_index
from .jointdist import (
    JointParams,
    cell_probability,
    joint_cdf,
    joint_pdf,
    joint_pvalue_tail,
    mc_joint_chisq_sampler,
)
from .matching import (
    StandardizedCounts,
    TestOutcome,
    count_occurrences,
    exact_count_moments,
    run_test,
    standardized_counts,
    theoretical_mu,
    theoretical_sigma_sq,
)
from .specfun import chi2_sf, chi2_sf_inv, reg_lower_gamma, reg_upper_gamma
from .templates import (
    CorrelationMatrix,
    Template,
    correlation,
    correlation_exact,
    correlation_matrix,
    default_battery,
    enumerate_aperiodic,
    is_aperiodic,
    overlap_profile,
)
from .whitening import (
    BatteryResult,
    WhiteningTransform,
    build_transform,
    eigendecompose,
    orthogonal_battery,
    rank_analysis,
)
