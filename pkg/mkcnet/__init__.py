# -*- coding: utf-8 -*-
# MKCNet module
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Image quality-aware diagnosis with meta-knowledge co-embedding.

Propose API :

- a small reverse-mode differentiation engine, with gradients of gradients
- the task network (backbone, attention blocks, meta-auxiliary block) and
  the Meta Learner producing auxiliary labels
- the two-stage training, with its exact meta gradient and a finite
  difference oracle
- a synthetic image quality-aware diagnosis benchmark
- metrics on all, high- and low-quality images, gradient and activation
  analyses
"""
from .analysis import CosineMatrix, cosine_matrix, export_activation_maps, export_features, grad_cosine_matrix
from .autograd import backward, backward_through_backward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, RunConfig, SynthConfig, TrainConfig, load_run_config
from .dataset import Dataset, DatasetManifest, SampleRecord, load_dataset, load_folder, save_dataset, split, \
    subsample_lq
from .dumper import MODE_CSV, MODE_JSON, MODE_TEXT, dump, dump_json, dump_scalar, suffix_to_mode
from .exception import AutodiffError, BlobFormatError, CheckpointError, ConfigError, DataError, MkcException, \
    NumericalAbort, NumericalError, OracleError, ShapeError, StaleRecordError
from .gradcheck import finite_diff_grad
from .grid import Grid
from .masking import AuxEmbedding, JointMask, build_mask, joint_code, select_y_omega
from .metrics import MetricsBundle, auc_macro_ovr, evaluate, f1_macro, metrics_bundle
from .model import MKCModel, MetaLearner, TaskNet, TaskNetOutput, VanillaNet, meta_learner_forward, \
    task_net_forward
from .objective import LossBreakdown, task_loss
from .params import GradientMap, ParamSet
from .record import ComputationRecord, no_record
from .synth import degrade, gen_dataset
from .tensor import Tensor
from .trainer import PseudoUpdate, TrainReport, fd_meta_grad_oracle, fit, meta_update, pseudo_update

__all__ = ['Tensor', 'ComputationRecord', 'no_record', 'backward', 'backward_through_backward',
           'finite_diff_grad', 'ParamSet', 'GradientMap',
           'TaskNet', 'VanillaNet', 'MetaLearner', 'MKCModel', 'TaskNetOutput',
           'task_net_forward', 'meta_learner_forward',
           'AuxEmbedding', 'JointMask', 'joint_code', 'build_mask', 'select_y_omega',
           'LossBreakdown', 'task_loss',
           'PseudoUpdate', 'TrainReport', 'pseudo_update', 'meta_update', 'fd_meta_grad_oracle', 'fit',
           'Checkpoint', 'save_checkpoint', 'load_checkpoint',
           'SynthConfig', 'ModelConfig', 'TrainConfig', 'RunConfig', 'load_run_config',
           'Dataset', 'DatasetManifest', 'SampleRecord', 'gen_dataset', 'degrade', 'split', 'subsample_lq',
           'save_dataset', 'load_dataset', 'load_folder',
           'MetricsBundle', 'auc_macro_ovr', 'f1_macro', 'metrics_bundle', 'evaluate',
           'CosineMatrix', 'cosine_matrix', 'grad_cosine_matrix', 'export_activation_maps', 'export_features',
           'Grid', 'dump', 'dump_json', 'dump_scalar', 'suffix_to_mode', 'MODE_JSON', 'MODE_CSV', 'MODE_TEXT',

           'MkcException', 'AutodiffError', 'ShapeError', 'StaleRecordError', 'NumericalError',
           'NumericalAbort', 'OracleError', 'ConfigError', 'DataError', 'BlobFormatError', 'CheckpointError',
           ]

__pdoc__ = {
    "blob": False,
    "dumper": False,
    "grid": False,
    "layers": False,
    "sortabledict": False,
}
__author__ = 'Engie Digital'
__license__ = 'BSD'
