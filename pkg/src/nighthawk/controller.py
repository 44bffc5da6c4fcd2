"""Event-triggered re-optimization state machine.

While monitoring, each frame's utility is compared with the best utility
found by the last optimization.  A drop larger than ``epsilon`` sustained
for ``debounce_n`` consecutive frames requests a new optimization; frames
that arrive while it runs are ignored.  Completion applies the new optimum.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .bopt import ControlInput, OptResult
from .errors import InvalidInputError, InvalidStateError


@dataclass(frozen=True)
class TriggerConfig:
    epsilon: float = 0.01
    debounce_n: int = 5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be > 0")
        if int(self.debounce_n) != self.debounce_n or self.debounce_n < 1:
            raise InvalidInputError("debounce_n must be an integer >= 1")


class Mode(enum.Enum):
    MONITOR = "monitor"
    OPTIMIZING = "optimizing"


class ActionKind(enum.Enum):
    NONE = "none"
    TRIGGER = "trigger_optimization"
    APPLY = "apply_config"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    config: ControlInput | None = None

    def __str__(self):
        if self.kind is ActionKind.APPLY:
            return f"{self.kind.value}(P={self.config.P!r},dt={self.config.dt!r})"
        return self.kind.value


NO_ACTION = Action(ActionKind.NONE)
TRIGGER = Action(ActionKind.TRIGGER)


@dataclass(frozen=True)
class ControllerState:
    mode: Mode = Mode.OPTIMIZING
    current: ControlInput | None = None
    m_star: float = 0.0
    violation_count: int = 0

    def __post_init__(self):
        if self.violation_count < 0:
            raise InvalidInputError("violation_count must be >= 0")
        if self.mode is Mode.MONITOR and self.current is None:
            raise InvalidInputError("a monitoring controller needs an applied configuration")


def initial_state() -> ControllerState:
    """Startup state: nothing is applied until the first optimization completes."""
    return ControllerState()


def step(state: ControllerState, frame_metric: float, config: TriggerConfig):
    """Advance one frame; returns ``(new_state, action)``."""
    if state.mode is Mode.OPTIMIZING:
        return state, NO_ACTION
    if state.m_star - frame_metric > config.epsilon:
        count = state.violation_count + 1
    else:
        count = 0
    if count >= config.debounce_n:
        return replace(state, mode=Mode.OPTIMIZING, violation_count=count), TRIGGER
    return replace(state, violation_count=count), NO_ACTION


def complete_optimization(state: ControllerState, result: OptResult):
    if state.mode is not Mode.OPTIMIZING:
        raise InvalidStateError("no optimization is in progress")
    new = ControllerState(Mode.MONITOR, result.x_star, float(result.y_star), 0)
    return new, Action(ActionKind.APPLY, result.x_star)
