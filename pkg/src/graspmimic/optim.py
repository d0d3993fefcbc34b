"""Decoupled-weight-decay Adam over gripper configurations.

Parameter vector layout is (translation[3], rotation_6d[6], theta[n]);
each slice gets its own learning rate. A single step decay divides all
rates at a fixed iteration. Joint values are clamped to their limits after
every step so forward kinematics always sees feasible angles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError
from .kinematics import GripperConfig
from .losses import LossBreakdown


@dataclass(frozen=True)
class OptSchedule:
    lr_translation: float = 0.001
    lr_rotation: float = 0.01
    lr_theta: float = 0.01
    iterations: int = 100
    decay_at: int = 50
    decay_factor: float = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if not (0 < self.decay_at <= self.iterations):
            raise ValidationError("decay_at must lie in (0, iterations]")
        if min(self.lr_translation, self.lr_rotation, self.lr_theta) <= 0:
            raise ValidationError("learning rates must be positive")

    def rates_at(self, iteration: int) -> tuple[float, float, float]:
        scale = 1.0 / self.decay_factor if iteration >= self.decay_at else 1.0
        return (
            self.lr_translation * scale,
            self.lr_rotation * scale,
            self.lr_theta * scale,
        )


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @staticmethod
    def zeros(dim: int) -> "OptimizerState":
        return OptimizerState(m=np.zeros(dim), v=np.zeros(dim), step=0)


def adamw_step(
    state: OptimizerState,
    params: np.ndarray,
    grad: np.ndarray,
    lr: np.ndarray,
    schedule: OptSchedule,
) -> tuple[np.ndarray, OptimizerState]:
    """One decoupled-weight-decay Adam update; returns new params and state."""
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ValidationError("parameter/gradient dimension mismatch")
    if not np.isfinite(grad).all():
        raise NumericalError("non-finite gradient entries")
    t = state.step + 1
    m = schedule.beta1 * state.m + (1.0 - schedule.beta1) * grad
    v = schedule.beta2 * state.v + (1.0 - schedule.beta2) * grad**2
    m_hat = m / (1.0 - schedule.beta1**t)
    v_hat = v / (1.0 - schedule.beta2**t)
    new_params = params - lr * (
        m_hat / (np.sqrt(v_hat) + schedule.eps) + schedule.weight_decay * params
    )
    return new_params, OptimizerState(m=m, v=v, step=t)


@dataclass(frozen=True)
class IterationRecord:
    """Loss at the start of each iteration, plus the rates the step used.

    The final record (iteration == schedule.iterations) holds the loss at
    the returned configuration; its rates repeat the last step's.
    """

    iteration: int
    breakdown: LossBreakdown
    lr_translation: float
    lr_rotation: float
    lr_theta: float


LossAndGrad = Callable[[GripperConfig], tuple[LossBreakdown, np.ndarray]]


def run_optimization(
    loss_and_grad: LossAndGrad,
    init: GripperConfig,
    schedule: OptSchedule,
    theta_limits: np.ndarray | None = None,
    param_mask: np.ndarray | None = None,
    trace: bool = True,
) -> tuple[GripperConfig, list[IterationRecord]]:
    """Run a fixed number of AdamW iterations; deterministic.

    param_mask freezes parameter entries entirely (no update, no moment
    accumulation). theta_limits, when given, clamps the theta slice after
    every step.
    """
    params = init.as_vector()
    dim = len(params)
    lr_vec = np.empty(dim)
    state = OptimizerState.zeros(dim)
    if param_mask is None:
        param_mask = np.ones(dim, dtype=bool)
    records: list[IterationRecord] = []
    rates = schedule.rates_at(0)
    for it in range(schedule.iterations):
        config = GripperConfig.from_vector(params)
        breakdown, grad = loss_and_grad(config)
        if not np.isfinite(breakdown.total):
            raise NumericalError(f"non-finite loss at iteration {it}")
        rates = schedule.rates_at(it)
        if trace:
            records.append(IterationRecord(it, breakdown, *rates))
        lr_vec[:3], lr_vec[3:9], lr_vec[9:] = rates
        new_params, state = adamw_step(
            state, params, np.where(param_mask, grad, 0.0), lr_vec, schedule
        )
        params = np.where(param_mask, new_params, params)
        if theta_limits is not None:
            params[9:] = np.clip(params[9:], theta_limits[:, 0], theta_limits[:, 1])
    final = GripperConfig.from_vector(params)
    if trace:
        final_breakdown, _ = loss_and_grad(final)
        records.append(IterationRecord(schedule.iterations, final_breakdown, *rates))
    return final, records
