"""Linear, penalized, binary-choice and panel regression from streamed sufficient statistics."""

from .accumulate import (
    CrossProducts,
    GroupedAccumulator,
    accumulate_block,
    accumulate_grouped,
    accumulate_grouped_source,
    accumulate_source,
    load_json,
    merge,
    save_json,
)
from .errors import DataError, NumericError, RankDeficient, StreamregError, UsageError
from .glm import GlmConfig, glm_fit
from .inference import BootstrapConfig, cluster_bootstrap_vcv, crve_vcv, hc1_vcv
from .ingest import ArraySource, Block, BlockStream, BlockStreamConfig, FileSource, Schema, open_stream
from .linear import iv_fit, ols_fit, ridge_fit, tsls_fit, woodbury_chain, woodbury_update_fit
from .panel import fe_recover_effects, fe_twoway_fit, fe_within_fit, subsample_fit
from .regularized import CoordinateDescentConfig, cv_select_lambda, elastic_net_fit, lasso_fit
from .results import FitResult

__version__ = "0.1.0"
