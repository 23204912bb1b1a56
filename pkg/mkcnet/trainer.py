# -*- coding: utf-8 -*-
# Two-stage training
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:
"""
Alternate optimisation of the task network and the Meta Learner.

Every batch runs two stages:

1. The task network takes an SGD step on its loss, the auxiliary target
   being a constant computed by the Meta Learner.
2. A pseudo step of the task network is taken inside a second-order record,
   so the pseudo-updated parameters depend on the Meta Learner through the
   auxiliary target. The diagnosis and quality losses of the pseudo-updated
   network, plus the negative entropy of the batch-mean auxiliary target,
   are differentiated through the pseudo step w.r.t. the Meta Learner, which
   takes its own SGD step.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .autograd import backward, backward_through_backward
from .config import TrainConfig
from .dataset import Batch, Dataset
from .exception import AutodiffError, DataError, NumericalAbort, OracleError, StaleRecordError
from .gradcheck import finite_diff_grad
from .losses import neg_entropy
from .masking import AuxEmbedding
from .metrics import evaluate
from .model import MKCModel
from .objective import LossBreakdown, task_loss
from .params import GradientMap, ParamSet
from .record import ComputationRecord, no_record
from .tensor import Tensor, mean

log = logging.getLogger(__name__)

ORACLE_MAX_PARAMETERS = 1000


def sgd_step(params: ParamSet, grads: GradientMap, lr: float, weight_decay: float = 0.0) -> ParamSet:
    """
    p - lr * (g + weight_decay * p), as new trainable leaves.
    """
    params.check_aligned(grads)
    return ParamSet((name, Tensor(p.data - lr * (grads[name].data + weight_decay * p.data),
                                  requires_grad=True, name=name))
                    for name, p in params.items())


def inner_step(record: ComputationRecord, loss: Tensor, params: ParamSet, lr: float) -> ParamSet:
    """
    p - lr * dloss/dp, computed inside `record`. With a second-order record
    the result stays differentiable w.r.t. everything the loss depends on.
    """
    grads = backward(record, loss, params)
    with record.resume():
        return ParamSet((name, p - lr * grads[name]) for name, p in params.items())


def regulariser(y_omega: Tensor, mode: str = "batch") -> Tensor:
    """
    Negative entropy of the batch-mean auxiliary target (`batch`), or mean
    negative entropy of each sample's target (`per_sample`).
    """
    if mode == "batch":
        return neg_entropy(mean(y_omega, axis=0))
    if mode == "per_sample":
        return neg_entropy(y_omega)
    raise AutodiffError("unknown regulariser mode %r" % mode)


def constant_target(model: MKCModel, phi: ParamSet, batch: Batch) -> Tuple[Optional[Tensor], Optional[np.ndarray]]:
    """
    Auxiliary target with the Meta Learner held constant.
    Returns:
        (y_omega, masks), both `None` without Meta Learner
    """
    if not model.uses_meta:
        return None, None
    masks = model.masks(batch.y_d, batch.y_q)
    with no_record():
        aux = model.auxiliary(batch.x, phi, masks)
    return aux.y_omega.detach(), masks


def task_step(model: MKCModel, theta: ParamSet, phi: ParamSet, batch: Batch) -> Tuple[ParamSet, LossBreakdown]:
    """
    First stage: one SGD step of the task network.
    Returns:
        The new task parameters and the losses before the step
    """
    config = model.train
    y_omega, masks = constant_target(model, phi, batch)
    with ComputationRecord() as record:
        record.watch(theta)
        losses = task_loss(model.forward(batch.x, theta), batch.y_d, batch.y_q, y_omega, masks,
                           config.gamma_focal)
    if not losses.is_finite():
        return theta, losses
    grads = backward(record, losses.total, theta)
    return sgd_step(theta, grads, config.task_lr, config.weight_decay), losses


class PseudoUpdate:
    """
    Second-order record of a pseudo step, consumed by one meta update.
    """
    __slots__ = "record", "theta", "phi", "theta_tilde", "aux", "masks", "batch", "losses", "objective", \
        "consumed"

    def __init__(self, record: ComputationRecord, theta: ParamSet, phi: ParamSet, theta_tilde: ParamSet,
                 aux: AuxEmbedding, masks: np.ndarray, batch: Batch, losses: LossBreakdown):
        self.record = record
        self.theta = theta
        self.phi = phi
        self.theta_tilde = theta_tilde
        self.aux = aux
        self.masks = masks
        self.batch = batch
        self.losses = losses
        self.objective = None  # type: Optional[float]
        self.consumed = False


def pseudo_update(model: MKCModel, theta: ParamSet, phi: ParamSet, batch: Batch,
                  config: Optional[TrainConfig] = None) -> PseudoUpdate:
    """
    theta~ = theta - alpha * grad_theta L(theta, y_omega(phi)), recorded to
    second order. `theta` is not modified.
    """
    config = config or model.train
    if not model.uses_meta:
        raise AutodiffError("the model has no Meta Learner")
    masks = model.masks(batch.y_d, batch.y_q)
    record = ComputationRecord(second_order=True)
    record.watch(theta)
    record.watch(phi)
    with record:
        aux = model.auxiliary(batch.x, phi, masks)
        losses = task_loss(model.forward(batch.x, theta), batch.y_d, batch.y_q, aux.y_omega, masks,
                           config.gamma_focal)
    theta_tilde = inner_step(record, losses.total, theta, config.alpha)
    return PseudoUpdate(record, theta, phi, theta_tilde, aux, masks, batch, losses)


def meta_gradient(model: MKCModel, pseudo: PseudoUpdate, config: Optional[TrainConfig] = None) -> GradientMap:
    """
    Exact gradient w.r.t. the Meta Learner of
    L_D(theta~) + L_Q(theta~) + lambda * R(y_omega), through the pseudo step.
    Consumes `pseudo`.
    """
    config = config or model.train
    if pseudo.consumed:
        raise StaleRecordError("this pseudo update was already used by a meta update")
    batch = pseudo.batch
    with pseudo.record:
        outer = task_loss(model.forward(batch.x, pseudo.theta_tilde), batch.y_d, batch.y_q, None,
                          gamma=config.gamma_focal)
        objective = outer.l_d + outer.l_q + config.lambda_reg * regulariser(pseudo.aux.y_omega, config.reg_mode)
    pseudo.consumed = True
    pseudo.objective = objective.item()
    return backward_through_backward(pseudo.record, objective, pseudo.phi)


def meta_update(model: MKCModel, phi: ParamSet, theta: ParamSet, batch: Batch,
                pseudo: Optional[PseudoUpdate], config: Optional[TrainConfig] = None) -> ParamSet:
    """
    Second stage: one SGD step of the Meta Learner.

    Args:
        pseudo: The pseudo update of this very batch, parameters and step
    Returns:
        The new Meta Learner parameters
    """
    config = config or model.train
    if pseudo is None or pseudo.batch is not batch or pseudo.theta is not theta or pseudo.phi is not phi:
        raise StaleRecordError("no pseudo update recorded for this batch and these parameters")
    grads = meta_gradient(model, pseudo, config)
    return sgd_step(phi, grads, config.beta, config.weight_decay)


def fd_meta_grad_oracle(model: MKCModel, phi: ParamSet, theta: ParamSet, batch: Batch,
                        config: Optional[TrainConfig] = None, h: float = 1e-4) -> GradientMap:
    """
    The meta gradient by central differences, recomputing the pseudo step for
    every perturbation of the Meta Learner. Refuses more than 1000
    parameters.
    """
    config = config or model.train
    if phi.num_parameters() > ORACLE_MAX_PARAMETERS:
        raise OracleError("%d Meta Learner parameters, the oracle accepts at most %d"
                          % (phi.num_parameters(), ORACLE_MAX_PARAMETERS))
    masks = model.masks(batch.y_d, batch.y_q)

    def objective(perturbed: ParamSet) -> float:
        with no_record():
            aux = model.auxiliary(batch.x, perturbed, masks)
        with ComputationRecord() as record:
            record.watch(theta)
            losses = task_loss(model.forward(batch.x, theta), batch.y_d, batch.y_q, aux.y_omega.detach(), masks,
                               config.gamma_focal)
        grads = backward(record, losses.total, theta)
        theta_tilde = ParamSet((name, Tensor(p.data - config.alpha * grads[name].data)) for name, p in theta.items())
        with no_record():
            outer = task_loss(model.forward(batch.x, theta_tilde), batch.y_d, batch.y_q, None,
                              gamma=config.gamma_focal)
            return outer.l_d.item() + outer.l_q.item() \
                + config.lambda_reg * regulariser(aux.y_omega, config.reg_mode).item()

    return finite_diff_grad(objective, phi, h)


@dataclass
class EpochRecord:
    """Mean losses of the first stage over an epoch, total = l_d + l_q + l_omega."""
    epoch: int
    l_d: float
    l_q: float
    l_omega: float
    total: float
    meta_objective: Optional[float] = None
    codes_seen: int = 0
    val: Optional[Dict[str, Any]] = None


@dataclass
class TrainReport:
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_auc: Optional[float] = None
    steps: int = 0
    wall_clock_s: Optional[float] = None

    def to_json(self, include_timing: bool = False) -> Dict[str, Any]:
        """The report; the wall clock only on request, so reruns compare equal."""
        values = asdict(self)
        if not include_timing:
            del values["wall_clock_s"]
        return values


EpochCallback = Callable[[int, ParamSet, ParamSet, EpochRecord], None]


def fit(model: MKCModel, dataset: Dataset, val_set: Optional[Dataset] = None,
        on_epoch: Optional[EpochCallback] = None,
        config_echo: Optional[Dict[str, Any]] = None) -> Tuple[ParamSet, ParamSet, TrainReport]:
    """
    Train from the seeded initial parameters.

    Args:
        model: The networks, with their training configuration
        dataset: Training images
        val_set: Optional validation images, evaluated after each epoch
        on_epoch: Called after each epoch with the current parameters
        config_echo: Stored in the report
    Returns:
        (theta, phi, report), the parameters of the last epoch
    Raises:
        NumericalAbort on a non-finite loss
    """
    config = model.train
    theta, phi = model.init_params(config.seed)
    report = TrainReport(seed=config.seed, config=dict(config_echo or {}))
    if config.epochs and len(dataset) == 0:
        raise DataError("empty training set")
    shuffle = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(2,)))
    started = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        sums = np.zeros(3)
        meta_values = []
        codes = set()
        batches = 0
        for batch in dataset.batches(config.batch_size, shuffle):
            report.steps += 1
            theta, losses = task_step(model, theta, phi, batch)
            if not losses.is_finite():
                raise NumericalAbort("non-finite loss at epoch %d, step %d" % (epoch, report.steps),
                                     report.steps, report)
            values = losses.values()
            log.debug("step %d: %s", report.steps, values)
            sums += (values["l_d"], values["l_q"], values["l_omega"])
            batches += 1
            if model.uses_meta:
                pseudo = pseudo_update(model, theta, phi, batch, config)
                codes.update(np.flatnonzero(pseudo.masks.any(axis=0)) // config.psi)
                phi = meta_update(model, phi, theta, batch, pseudo, config)
                if not np.isfinite(pseudo.objective):
                    raise NumericalAbort("non-finite meta objective at epoch %d, step %d" % (epoch, report.steps),
                                         report.steps, report)
                meta_values.append(pseudo.objective)
        l_d, l_q, l_omega = (float(v) for v in sums / max(batches, 1))
        record = EpochRecord(epoch, l_d, l_q, l_omega, l_d + l_q + l_omega,
                             float(np.mean(meta_values)) if meta_values else None, len(codes))
        if val_set is not None and len(val_set):
            bundles = evaluate(model, theta, val_set, config.batch_size)
            record.val = {name: bundle.to_json() for name, bundle in bundles.items()}
            auc = bundles["all"].auc_macro_ovr
            if auc is not None and (report.best_val_auc is None or auc > report.best_val_auc):
                report.best_val_auc, report.best_epoch = auc, epoch
        report.history.append(record)
        log.info("epoch %d/%d: total %.4f (l_d %.4f, l_q %.4f, l_omega %.4f)",
                 epoch, config.epochs, record.total, l_d, l_q, l_omega)
        if on_epoch is not None:
            on_epoch(epoch, theta, phi, record)
    if report.best_epoch is None and report.history:
        report.best_epoch = report.history[-1].epoch
    report.wall_clock_s = time.perf_counter() - started
    log.info("training finished in %.1fs", report.wall_clock_s)
    return theta, phi, report
