"""O(n) simulation of the annihilating (no-recollision) process.

Elastic particles vanish after their first contact, so the tracer only ever
meets particle ``i`` at its initial position ``S_i`` and the squared
velocities obey a closed two-step recursion. Everything is done in
squared-velocity space; square roots appear only in time increments.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from ._kernels import modified_recursion
from .environment import Environment
from .errors import InvalidInputError
from .model import ModelParams

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModifiedTrajectory:
    """Collision-indexed arrays; entry ``k`` refers to particle ``k + 1``."""

    n: int
    v2_in: np.ndarray
    v2_out: np.ndarray
    t_bar: np.ndarray
    mass: np.ndarray
    positions: np.ndarray

    @property
    def v_out(self) -> np.ndarray:
        return np.sqrt(self.v2_out)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["i", "t_bar", "v2_in", "v2_out", "M", "S"])
        for k in range(self.n):
            w.writerow(
                [
                    k + 1,
                    f"{self.t_bar[k]:.17g}",
                    f"{self.v2_in[k]:.17g}",
                    f"{self.v2_out[k]:.17g}",
                    f"{self.mass[k]:.17g}",
                    f"{self.positions[k]:.17g}",
                ]
            )
        return buf.getvalue()


def simulate_modified(env: Environment, params: ModelParams) -> ModifiedTrajectory:
    if len(env) == 0:
        raise InvalidInputError("empty environment")
    if params.degenerate:
        log.warning("force is zero: the tracer never moves, trajectory truncated at i=0")
        empty = np.empty(0)
        return ModifiedTrajectory(0, empty, empty, empty, empty, env.positions[:0])
    v2_in, v2_out, t_bar, mass = modified_recursion(
        np.ascontiguousarray(env.gaps, dtype=np.float64),
        np.ascontiguousarray(env.sticky, dtype=np.float64),
        float(params.force),
        float(params.tracer_mass0),
    )
    return ModifiedTrajectory(len(env), v2_in, v2_out, t_bar, mass, env.positions)


def v2_product_form(env: Environment, params: ModelParams, i: int) -> float:
    """Squared outgoing velocity at collision ``i`` from the iterated product form.

    Sums ``2 F xi_j X_{i,j}`` over ``j <= i``, independently of the recursion.
    """
    from .decomposition import weight_row

    if not 1 <= i <= len(env):
        raise InvalidInputError(f"collision index {i} outside 1..{len(env)}")
    if params.degenerate:
        return 0.0
    row = weight_row(env, params, i)
    return float(np.sum(2.0 * params.force * env.gaps[:i] * row))
