"""Minimum Bayes risk decoding with low-rank score-matrix completion.

Plain ALS completion (PMBR) and agreement-constrained ALS (AC-PMBR), which
fuses a sparse matrix from an expensive target metric with a denser matrix
from a cheap distilled metric.
"""

from .decoding import (
    CandidateSet,
    Selection,
    decode_ac_pmbr,
    decode_mbr,
    decode_pmbr,
    select_from_matrix,
    select_map,
    select_oracle,
)
from .evaluation import CostModel, cost_ac_pmbr, cost_pmbr, mse, paired_bootstrap, tune_gamma
from .factorization import (
    FactorizerConfig,
    FactorPair,
    FitReport,
    ac_als_fit,
    als_fit,
    complete,
    loss_ac,
    loss_mf,
    total_loss,
)
from .metrics import ChrF, ExternalMetric, Metric, MetricTransportError, SentenceBLEU, make_metric
from .sampling import ObservationMask, PartialScoreMatrix, observe, sample_mask
from .synth import SynthSpec, gen_distilled, gen_ground_truth

__version__ = "0.1.0"
