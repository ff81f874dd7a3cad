"""Personalised loss-distribution resampling for denoising implicit-feedback recommenders."""

from .dataset import (InteractionSet, NoisyTrainSet, SplitDataset, filter_min_degree,
                      generate_synthetic, inject_noise_per_user, inject_noise_ratio,
                      load_interactions, split)
from .evaluation import MetricReport, evaluate, topk
from .loss import LossKind, TrainingTriple, bce_loss, bpr_loss, gradients, interaction_loss
from .model import ModelState, init_model, propagate, score, score_all
from .sampler import (CandidatePool, ResampleConfig, build_candidate_pool, resample,
                      resample_probabilities, sample_negative)
from .trainer import Denoiser, EpochStats, TrainConfig, run_training, train_epoch

__version__ = "0.1.0"
