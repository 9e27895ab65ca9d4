"""Fairness audit toolkit for LLM-assisted hiring pipelines.

hirefair perturbs resume corpora in controlled ways (name swaps, typos,
formatting), drives pluggable embedding / completion backends, and computes
fairness metrics for the retrieval stage (exclusion, non-uniformity) and the
summarization stage (invariance-violation rates over proxy text measures).
"""

__version__ = "0.1.0"

from hirefair.corpus import (
    DemographicGroup,
    JobPost,
    NamePool,
    Resume,
    load_corpus,
    load_name_pools,
    pair_jobs,
    save_corpus,
)
from hirefair.perturb import PerturbationSpec
from hirefair.retrieval import exclusion, non_uniformity, rank_resumes
from hirefair.stats import (
    bh_correct,
    bonferroni_correct,
    chi_squared_gof,
    paired_t_test,
)

__all__ = [
    "DemographicGroup",
    "JobPost",
    "NamePool",
    "PerturbationSpec",
    "Resume",
    "bh_correct",
    "bonferroni_correct",
    "chi_squared_gof",
    "exclusion",
    "load_corpus",
    "load_name_pools",
    "non_uniformity",
    "pair_jobs",
    "paired_t_test",
    "rank_resumes",
    "save_corpus",
]
