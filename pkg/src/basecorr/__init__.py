"""Penalized baseline correction for spectra.

The package covers the unsupervised Whittaker-type smoothers (direct and
adaptively reweighted), two supervised variants that exploit reference
analyte concentrations, PLS1 calibration, and a reproducible benchmarking
protocol with MARD/R2 scoring.
"""

from .datasets import (
    Dataset,
    DatasetSchema,
    SpectraMatrix,
    SynthSpec,
    load_dataset,
    save_dataset,
    synth_generate,
)
from .errors import (
    BasecorrError,
    ConstantInputError,
    DatasetFormatError,
    DegenerateAnalyteError,
    DegenerateRegressionError,
    DegenerateResponseError,
    DimensionError,
    FeasibilityError,
    InvalidMetricError,
    NumericalError,
    ParameterError,
    SingularSystemError,
    ValidationError,
    ZeroReferenceError,
)
from .evaluation import (
    BenchmarkReport,
    BoxplotSummary,
    MetricsRecord,
    SchemeConfig,
    SplitPlan,
    ensemble_estimate_a2,
    make_splits,
    mard,
    pearson_correlation,
    r2,
    run_benchmark,
    run_scheme,
    write_records,
    write_summary,
)
from .operators import (
    DerivativeOperator,
    EigenSystem,
    FilterBank,
    cached_eigensystem,
    closed_form_eigensystem,
    eigensystem,
    filter_bank,
    load_eigensystem,
    make_operator,
    nullspace_basis,
    save_eigensystem,
)
from .regression import (
    LatentSelection,
    PlsModel,
    mean_center,
    pls_fit,
    pls_predict,
    select_latent_dim,
)
from .smoothers import (
    AirplsConfig,
    BaselineResult,
    airpls_baseline,
    eilers_baseline,
    eilers_baseline_multi_lambda,
    smooth_rows,
    weighted_baseline,
)
from .spbc import (
    SpbcConfig,
    SpbcResult,
    SvdCache,
    ridge_solve,
    solve_rank_one_penalty,
    spbc_i,
    spbc_n,
    spbc_step4_fast,
    svd_cache,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
