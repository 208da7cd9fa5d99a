"""Concurrent self-test for binarized networks via uncertainty fingerprints."""

__version__ = "0.1.0"

from .campaign import CampaignConfig, CampaignSummary, RunResult, evaluate_model, run_campaign, summarize
from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_idx, make_synthetic
from .detector import FingerprintBoundary, Status, Verdict, adjust_boundary, calibrate_boundary, classify
from .faults import (ActivationFaultHook, FaultSpec, GoldenSnapshot, inject_weight_faults,
                     make_activation_fault_hook, restore, snapshot)
from .nn import DualHeadModel, count_macs, count_params, desk_cnn, fingerprint, forward_dual, max_logit_score
from .tensor_core import BitTensor, pack_signs, unpack_signs, xnor_popcount_dot
from .training import Dataset, TrainConfig, fingerprint_loss, split_dataset, train_task, train_two_stage, train_uncertainty_head
