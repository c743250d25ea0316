"""Style-guided autoregressive sampling over discrete codebook token grids.

The pipeline: estimate a style's token distribution and the dataset's
Monte-Carlo token distribution, form their element-wise ratio as a
guidance weight vector, and rebalance a trained autoregressive prior with
it at every generation step.  Variants scope the statistics per semantic
region or per spatial cell.
"""

from .core import (
    CategoricalDistribution,
    CodebookSpec,
    FormatError,
    SemanticGrid,
    TokenGrid,
    ValidationError,
    normalize,
    uniform_distribution,
    validate_grid,
)
from .distributions import (
    RegionalDistributions,
    SpatialDistributions,
    average_distributions,
    average_regional,
    average_spatial,
    collapse_regional,
    collapse_spatial,
    histogram_by_cell,
    histogram_by_region,
    histogram_from_grid,
    monte_carlo_dataset_distribution,
    monte_carlo_regional_distribution,
    monte_carlo_spatial_distribution,
    smoothed_distribution,
)
from .guidance import (
    LikelihoodTable,
    LikelihoodVector,
    global_likelihood_table,
    rebalance_prior,
    regional_likelihoods,
    select_likelihood,
    spatial_likelihoods,
    style_likelihood,
)
from .metrics import (
    GuidanceReport,
    StyleReference,
    guidance_report,
    kl_divergence,
    spatial_divergence,
    style_match_rate,
    total_variation,
)
from .prior import (
    MarkovGridPrior,
    PriorModel,
    exact_sequence_distribution,
    load_model,
    save_model,
    train_markov_prior,
)
from .sampler import SamplingConfig, batch_sample, sample_grid, step_posterior
from .world import (
    BenchmarkConfig,
    LayoutSpec,
    StyleSpec,
    default_landscape_config,
    generate_scene,
    make_benchmark,
    spatial_contrast_config,
)

__version__ = "0.1.0"
