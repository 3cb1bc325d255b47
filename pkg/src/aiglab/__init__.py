"""Desk-scale lab for reward finetuning of diffusion models on Gaussian mixtures.

Implements DRaFT-style reward finetuning with KL and LoRA-scaling regularizers,
Annealed Importance Guidance (AIG) at sampling time, and the coverage metrics
(FID, generalized recall, SCD, LSCD) used to compare them.
"""

from aiglab.linalg import SeededRng, sample_standard_normal, sqrtm_psd, sym_eigen
from aiglab.diffusion import (
    NoiseSchedule,
    SampleSet,
    ScoreField,
    forward_diffuse,
    langevin_transition,
    reverse_sample,
)
from aiglab.gmm import GmmDistribution
from aiglab.scorenet import MlpScoreNet, TrainConfig, train_dsm
from aiglab.reward import (
    BumpReward,
    DropoutRewardNet,
    QuadraticTestProblem,
    draft_finetune,
    kl_regularized_finetune,
    lemma2_check,
    lora_scale,
    nonparametric_optimum,
)
from aiglab.aig import AigScoreField, GammaSchedule, aig_sample
from aiglab.metrics import CoverageReport, fid, generalized_recall, lscd, pareto_front, scd

__version__ = "0.1.0"
