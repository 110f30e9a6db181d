"""Reward model: potential-based shaping toward each agent's desire, action
costs, and the cooperative aggregation across agents."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .actions import AgentDesire, MacroActionKind
from .world import PrimitiveAction, VehicleState


@dataclass(frozen=True, slots=True)
class RewardWeights:
    """Weight defaults are ordered so safety >> desires >> comfort.

    Absolute returns are therefore implementation-defined; only orderings and
    structural properties are meaningful across configurations.
    """

    w_collision: float = -1000.0
    w_v: float = 1.0           # potential weight per m/s of velocity deviation
    w_lane: float = 10.0       # potential weight per lane of lateral deviation
    w_v_step: float = 0.5      # per-step efficiency penalty per m/s deviation
    w_lanechange: float = 1.0  # comfort penalty per lane change
    w_accel: float = 0.5       # comfort penalty per speed change
    gamma: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.w_collision >= 0.0:
            raise ValueError("w_collision must be negative")


def potential(state: VehicleState, desire: AgentDesire, weights: RewardWeights) -> float:
    """State potential; maximal (zero) exactly when the desire is met."""
    return -(
        weights.w_v * abs(state.v - desire.v_des)
        + weights.w_lane * abs(state.lane - desire.l_des)
    )


def shaped_step_reward(
    s: VehicleState,
    s_next: VehicleState,
    desire: AgentDesire,
    weights: RewardWeights,
) -> float:
    """gamma * phi(s') - phi(s) for one primitive transition."""
    return weights.gamma * potential(s_next, desire, weights) - potential(s, desire, weights)


def smdp_shaped_reward(
    phi_start: float, phi_end: float, tau: int, gamma: float
) -> float:
    """Shaping over a macro-action of tau steps: gamma^tau phi_end - phi_start.

    Equals the discounted sum of the per-step shaped rewards inside the
    macro-action (telescoping), so per-step application is used in practice
    and this form is exercised by the property tests.
    """
    if tau < 1:
        raise ValueError("tau must be a positive step count")
    return gamma**tau * phi_end - phi_start


def action_reward(
    s: VehicleState,
    s_next: VehicleState,
    action: PrimitiveAction,
    collided: bool,
    desire: AgentDesire,
    weights: RewardWeights,
) -> float:
    """Safety + efficiency + comfort components for one primitive step."""
    r = weights.w_collision if collided else 0.0
    r -= weights.w_v_step * abs(s_next.v - desire.v_des)
    if action is PrimitiveAction.LANE_LEFT or action is PrimitiveAction.LANE_RIGHT:
        r -= weights.w_lanechange
    elif action is PrimitiveAction.ACCELERATE or action is PrimitiveAction.DECELERATE:
        r -= weights.w_accel
    return r


def ego_step_reward(
    s: VehicleState,
    s_next: VehicleState,
    action: PrimitiveAction,
    collided: bool,
    desire: AgentDesire,
    weights: RewardWeights,
) -> float:
    """Full per-step ego reward: shaping plus action components."""
    return action_reward(s, s_next, action, collided, desire, weights) + shaped_step_reward(
        s, s_next, desire, weights
    )


def cooperative_reward(ego: int, ego_rewards: Sequence[float], cooperation: float) -> float:
    """r^ego plus cooperation-weighted sum of everyone else's reward."""
    if not 0 <= ego < len(ego_rewards):
        raise IndexError(f"ego index {ego} outside reward list")
    own = ego_rewards[ego]
    return own + cooperation * (sum(ego_rewards) - own)


class AgentTraceStep(NamedTuple):
    """Per-agent record of one executed step inside a search iteration."""

    ego_reward: float
    macro: MacroActionKind | None  # active macro during the step (None = flat)
    macro_started: bool            # a new macro was selected at this step
    collided: bool = False


class TraceStep(NamedTuple):
    agents: list[AgentTraceStep]
    in_tree: bool


@dataclass(slots=True)
class RewardTrace:
    """Reward sequence of one iteration, tagged with each agent's hierarchy
    activity; the backpropagation bounds returns from this record."""

    steps: list[TraceStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def ego_rewards(self, agent: int) -> list[float]:
        return [s.agents[agent].ego_reward for s in self.steps]
