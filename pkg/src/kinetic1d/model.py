"""Collision laws and constant-acceleration kinematics.

Both simulators share these primitives. Everything here is a pure function
of its arguments, in float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .environment import GapDistSpec
from .errors import InvalidInputError, NoApproachError

# Approach speeds below this at contact count as grazing (no collision).
GRAZING_SPEED = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical and statistical parameters of the tracer model.

    Parameters
    ----------
    force : float
        Constant force acting on the tracer only.
    stick_prob : float
        Probability ``p`` that a neutral particle is sticky, in (0, 1].
    gap_dist : GapDistSpec
        Law of the initial inter-particle gaps.
    tracer_mass0 : float
        Initial tracer mass; neutral particles have unit mass.
    """

    force: float = 1.0
    stick_prob: float = 0.5
    gap_dist: GapDistSpec = field(default_factory=lambda: GapDistSpec.exponential(1.0))
    tracer_mass0: float = 2.0

    def __post_init__(self):
        if not math.isfinite(self.force) or self.force < 0:
            raise InvalidInputError("force must be finite and >= 0 (0 is a degenerate input)")
        if not (0.0 < self.stick_prob <= 1.0):
            raise InvalidInputError("stick_prob must be in (0,1]")
        if not math.isfinite(self.tracer_mass0) or self.tracer_mass0 <= 1.0:
            raise InvalidInputError("tracer_mass0 must be > 1 (default 2)")

    @property
    def mu(self) -> float:
        return self.gap_dist.declared_mean

    @property
    def sigma2(self) -> float:
        return self.gap_dist.declared_var

    @property
    def degenerate(self) -> bool:
        """True when the force vanishes and the tracer never moves."""
        return self.force == 0.0


@dataclass(frozen=True)
class TracerState:
    time: float = 0.0
    position: float = 0.0
    velocity: float = 0.0
    mass: float = 2.0


@dataclass(frozen=True)
class CollisionOutcome:
    tracer_velocity_after: float
    tracer_mass_after: float
    neutral_velocity_after: Optional[float] = None


def _check_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidInputError(f"{name} must be finite, got {value!r}")


def resolve_sticky(v_tracer: float, m_tracer: float) -> CollisionOutcome:
    """Perfectly inelastic collision with a standing unit-mass particle."""
    _check_finite(v_tracer=v_tracer, m_tracer=m_tracer)
    if m_tracer < 1.0:
        raise InvalidInputError("m_tracer must be >= 1")
    return CollisionOutcome(
        tracer_velocity_after=m_tracer * v_tracer / (m_tracer + 1.0),
        tracer_mass_after=m_tracer + 1.0,
    )


def resolve_elastic(v_tracer: float, m_tracer: float, v_neutral: float = 0.0) -> CollisionOutcome:
    """Perfectly elastic collision with a unit-mass particle moving at ``v_neutral``.

    Raises
    ------
    NoApproachError
        If the tracer is not faster than the neutral particle.
    """
    _check_finite(v_tracer=v_tracer, m_tracer=m_tracer, v_neutral=v_neutral)
    if m_tracer <= 1.0:
        raise InvalidInputError("m_tracer must be > 1 for elastic collisions")
    if not v_tracer > v_neutral:
        raise NoApproachError(
            f"bodies not approaching: v_tracer={v_tracer!r} <= v_neutral={v_neutral!r}"
        )
    m = m_tracer
    # Written around the relative velocity so that v' - V+ = V - v holds to rounding.
    rel = v_tracer - v_neutral
    v_after = v_tracer - 2.0 * rel / (m + 1.0)
    neutral_after = v_after + rel
    return CollisionOutcome(
        tracer_velocity_after=v_after,
        tracer_mass_after=m,
        neutral_velocity_after=neutral_after,
    )


def torricelli_velocity(v0: float, force: float, mass: float, dx: float) -> float:
    """Speed after moving ``dx`` under constant force from speed ``v0``."""
    _check_finite(v0=v0, force=force, mass=mass, dx=dx)
    return math.sqrt(v0 * v0 + 2.0 * force * dx / mass)


def flight_time(v0: float, force: float, mass: float, dx: float) -> float:
    """Time to cover ``dx`` from speed ``v0`` under constant force.

    Uses ``2 dx / (v0 + v1)``, which has no cancellation when ``v0`` dominates.
    """
    _check_finite(v0=v0, force=force, mass=mass, dx=dx)
    if dx < 0:
        raise InvalidInputError("dx must be >= 0")
    if dx == 0:
        return 0.0
    v1 = math.sqrt(v0 * v0 + 2.0 * force * dx / mass)
    if v0 + v1 == 0.0:
        raise InvalidInputError("tracer at rest with zero force never moves")
    return 2.0 * dx / (v0 + v1)


def catch_up_time(
    tracer: TracerState, neutral_pos: float, neutral_vel: float, force: float
) -> Optional[float]:
    """Earliest time at which the accelerating tracer reaches a ballistic particle.

    Returns ``None`` if the tracer never reaches it (only possible at zero force).
    """
    _check_finite(neutral_pos=neutral_pos, neutral_vel=neutral_vel, force=force)
    gap = neutral_pos - tracer.position
    if gap < 0:
        raise InvalidInputError("neutral particle must not be behind the tracer")
    return _catch_up(gap, tracer.velocity - neutral_vel, force / tracer.mass)


def _catch_up(gap: float, rel: float, accel: float) -> Optional[float]:
    # Smallest t > 0 of (accel/2) t^2 + rel t - gap = 0, or 0 for a contact
    # that is already closing.
    if gap == 0.0 and rel >= 0.0:
        return 0.0
    if accel == 0.0:
        return gap / rel if rel > 0 else None
    disc = math.sqrt(rel * rel + 2.0 * accel * gap)
    if rel >= 0.0:
        return 2.0 * gap / (rel + disc)
    return (disc - rel) / accel
