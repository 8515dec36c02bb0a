"""Seeded reactive operator for benchmark runs.

Models the closed-loop behavior a human shows when steering through sparse
visual feedback: a minimum-jerk reach toward a *perceived* goal that sits
short of the true one, a grasp attempt, and on failure a corrective
re-perception loop that shrinks the error geometrically. Once the grasp
succeeds the operator lifts the item clear. Every draw comes from one seeded
generator, so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..worldmodel import vec3
from .traces import OperatorCommand, min_jerk


@dataclass(frozen=True)
class OperatorModelParams:
    goal_object: str              # object id the operator is fetching
    arm: str = "left"
    short_stop: float = 0.05      # initial perception bias magnitude [m]
    jitter_sigma: float = 0.02    # hand tremor scale [m]
    jitter_ema: float = 0.5
    reach_duration: float = 2.5
    correction_duration: float = 1.2
    settle_duration: float = 0.4  # pause before/while squeezing the gripper
    correction_decay: float = 0.45
    perception_noise: float = 0.3  # fraction of remaining bias redrawn as noise
    lift_vector: tuple = (0.0, 0.0, 0.15)
    lift_duration: float = 1.5
    max_corrections: int = 12


@dataclass
class Observation:
    """What the operator can see: the robot and the grasp outcome."""

    left_pos: np.ndarray
    right_pos: np.ndarray
    attached_objects: frozenset


class ReactiveOperator:
    """State machine: REACH -> (SETTLE -> CHECK -> CORRECT)* -> LIFT -> HOLD."""

    def __init__(
        self,
        params: OperatorModelParams,
        goal_position,
        start_left,
        start_right,
        rot_left,
        rot_right,
        seed: int,
    ):
        self.p = params
        self.goal = vec3(goal_position)
        self.start_left = vec3(start_left)
        self.start_right = vec3(start_right)
        self.rot_left = rot_left
        self.rot_right = rot_right
        self.rng = np.random.default_rng(seed)

        start = self.start_left if params.arm == "left" else self.start_right
        approach = self.goal - start
        approach /= np.linalg.norm(approach)
        # perceived goal starts short of the true one along the approach
        self.bias = -params.short_stop * approach
        self.phase = "reach"
        self.phase_start = 0.0
        self.seg_from = start.copy()
        self.seg_to = self.goal + self.bias
        self.seg_duration = params.reach_duration
        self.grip = False
        self.corrections = 0
        self._jitter_state = np.zeros(3)
        self._done_time: float | None = None

    # -- internal ------------------------------------------------------------
    def _jitter(self) -> np.ndarray:
        if self.p.jitter_sigma <= 0:
            return np.zeros(3)
        raw = self.rng.normal(scale=self.p.jitter_sigma, size=3)
        self._jitter_state = self.p.jitter_ema * raw + (1 - self.p.jitter_ema) * self._jitter_state
        return self._jitter_state

    def _begin(self, phase: str, t: float, seg_to=None, duration: float = 0.0):
        self.phase = phase
        self.phase_start = t
        if seg_to is not None:
            self.seg_from = self.seg_to
            self.seg_to = np.asarray(seg_to, dtype=float)
            self.seg_duration = duration

    def _advance(self, t: float, attached: bool):
        elapsed = t - self.phase_start
        if self.phase == "reach" and elapsed >= self.seg_duration:
            self.grip = True
            self._begin("settle", t)
        elif self.phase == "settle" and elapsed >= self.p.settle_duration:
            if attached:
                self._begin("lift", t, self.seg_to + np.asarray(self.p.lift_vector), self.p.lift_duration)
            elif self.corrections >= self.p.max_corrections:
                self._begin("hold", t)
            else:
                # grasp missed: open up, re-perceive, and nudge closer
                self.grip = False
                self.corrections += 1
                decay = self.p.correction_decay
                noise = self.rng.normal(scale=self.p.perception_noise * decay, size=3)
                self.bias = decay * self.bias * (1.0 + noise)
                self._begin("correct", t, self.goal + self.bias, self.p.correction_duration)
        elif self.phase == "correct" and elapsed >= self.seg_duration:
            self.grip = True
            self._begin("settle", t)
        elif self.phase == "lift":
            self.grip = True
            if elapsed >= self.seg_duration and self._done_time is None:
                self._done_time = t + 1.0  # hold a beat, then the trace ends

    # -- operator source interface --------------------------------------------
    def command_for_tick(self, tick: int, t: float, obs: Observation) -> OperatorCommand:
        attached = self.p.goal_object in obs.attached_objects
        if attached and self.phase in ("reach", "settle", "correct"):
            # the operator sees the grasp succeed and moves on to the lift
            self.grip = True
            here = self._moving_position(t)
            self.seg_to = here
            self._begin("lift", t, here + np.asarray(self.p.lift_vector), self.p.lift_duration)
        else:
            self._advance(t, attached)

        pos = self._moving_position(t) + self._jitter()
        left = pos if self.p.arm == "left" else self.start_left
        right = pos if self.p.arm == "right" else self.start_right
        grip_l = self.grip if self.p.arm == "left" else False
        grip_r = self.grip if self.p.arm == "right" else False
        return OperatorCommand(left, right, self.rot_left, self.rot_right, grip_l, grip_r)

    def _moving_position(self, t: float) -> np.ndarray:
        if self.phase in ("settle", "hold"):
            return self.seg_to.copy()
        tau = (t - self.phase_start) / self.seg_duration if self.seg_duration > 0 else 1.0
        return min_jerk(self.seg_from, self.seg_to, tau)

    def finished(self, t: float) -> bool:
        if self.phase == "hold":
            return t > self.phase_start + 1.0
        return self._done_time is not None and t > self._done_time
