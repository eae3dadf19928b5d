"""Problem builders: lifted l1 models, the SVM dual, GFLASSO and the structural SVM."""

from .gflasso import GflassoInstance, build_gflasso, gen_gflasso_data, load_gflasso
from .lifting import LiftedL1Spec, build_svm_dual, l1_objective, lift_l1, split_lifted
from .ssvm import (
    SsvmConfig,
    SsvmDataset,
    gen_ssvm_data,
    load_ssvm_jsonl,
    run_ssvm_bcfwas,
    ssvm_duality_gap,
    viterbi_decode,
)

__all__ = [
    "build_gflasso",
    "build_svm_dual",
    "gen_gflasso_data",
    "gen_ssvm_data",
    "GflassoInstance",
    "l1_objective",
    "lift_l1",
    "LiftedL1Spec",
    "load_gflasso",
    "load_ssvm_jsonl",
    "run_ssvm_bcfwas",
    "split_lifted",
    "ssvm_duality_gap",
    "SsvmConfig",
    "SsvmDataset",
    "viterbi_decode",
]
