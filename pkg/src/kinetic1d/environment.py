"""Random media: i.i.d. gaps and stickiness flags, sampled reproducibly.

Each trajectory gets its own PCG64 stream keyed by ``(master_seed,
trajectory_index)`` through :class:`numpy.random.SeedSequence`, so a
realization never depends on how many workers produced its neighbours.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import InvalidInputError

if TYPE_CHECKING:
    from .model import ModelParams

GAP_KINDS = ("exponential", "uniform", "gamma", "constant")


@dataclass(frozen=True)
class GapDistSpec:
    """Law of the inter-particle gap.

    ``args`` holds the kind's parameters: ``(mean,)``, ``(lo, hi)``,
    ``(shape, scale)`` or ``(value,)``.
    """

    kind: str
    args: tuple

    def __post_init__(self):
        if self.kind not in GAP_KINDS:
            raise InvalidInputError(f"unknown gap distribution kind {self.kind!r}")
        args = tuple(float(a) for a in self.args)
        object.__setattr__(self, "args", args)
        if not all(math.isfinite(a) for a in args):
            raise InvalidInputError("gap distribution parameters must be finite")
        expected = {"exponential": 1, "uniform": 2, "gamma": 2, "constant": 1}[self.kind]
        if len(args) != expected:
            raise InvalidInputError(f"{self.kind} takes {expected} parameter(s)")
        if self.kind == "uniform":
            lo, hi = args
            if not (0.0 <= lo < hi):
                raise InvalidInputError("uniform gaps need 0 <= lo < hi")
        elif any(a <= 0 for a in args):
            raise InvalidInputError(f"{self.kind} parameters must be positive")

    @classmethod
    def exponential(cls, mean: float = 1.0) -> "GapDistSpec":
        return cls("exponential", (mean,))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "GapDistSpec":
        return cls("uniform", (lo, hi))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "GapDistSpec":
        return cls("gamma", (shape, scale))

    @classmethod
    def constant(cls, value: float) -> "GapDistSpec":
        return cls("constant", (value,))

    @property
    def declared_mean(self) -> float:
        return moments(self)[0]

    @property
    def declared_var(self) -> float:
        return moments(self)[1]

    @property
    def outside_theorem_hypotheses(self) -> bool:
        """Deterministic gaps are not absolutely continuous."""
        return self.kind == "constant"

    def to_dict(self) -> dict:
        names = {
            "exponential": ("mean",),
            "uniform": ("lo", "hi"),
            "gamma": ("shape", "scale"),
            "constant": ("value",),
        }[self.kind]
        return {"kind": self.kind, **dict(zip(names, self.args))}


def moments(spec: GapDistSpec) -> tuple[float, float]:
    """Analytic mean and variance of the gap law."""
    a = spec.args
    if spec.kind == "exponential":
        return a[0], a[0] * a[0]
    if spec.kind == "uniform":
        lo, hi = a
        return 0.5 * (lo + hi), (hi - lo) ** 2 / 12.0
    if spec.kind == "gamma":
        shape, scale = a
        return shape * scale, shape * scale * scale
    return a[0], 0.0


@dataclass(frozen=True)
class Environment:
    """One realization of the medium: gaps, stickiness flags and positions.

    Arrays are 0-based: ``gaps[i-1]`` is the gap in front of particle ``i``.
    """

    gaps: np.ndarray
    sticky: np.ndarray
    positions: np.ndarray
    seed: Optional[int] = None
    trajectory_index: Optional[int] = None
    params_digest: str = ""
    outside_theorem_hypotheses: bool = field(default=False)

    def __post_init__(self):
        n = len(self.gaps)
        if not (len(self.sticky) == n == len(self.positions)):
            raise InvalidInputError("gaps, sticky and positions must have equal length")
        for arr in (self.gaps, self.sticky, self.positions):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.gaps)

    @classmethod
    def from_arrays(cls, gaps, sticky, **kwargs) -> "Environment":
        gaps = np.array(gaps, dtype=np.float64)
        sticky = np.array(sticky, dtype=np.int8)
        if gaps.ndim != 1 or len(gaps) == 0:
            raise InvalidInputError("need a nonempty 1-d gap array")
        if np.any(~np.isfinite(gaps)) or np.any(gaps <= 0):
            raise InvalidInputError("gaps must be finite and positive")
        if np.any((sticky != 0) & (sticky != 1)):
            raise InvalidInputError("sticky flags must be 0 or 1")
        return cls(gaps, sticky, np.cumsum(gaps), **kwargs)

    def xi_bar(self, mu: float) -> np.ndarray:
        return self.gaps - mu

    def eta_bar(self, p: float) -> np.ndarray:
        return self.sticky - p

    def head(self, n: int) -> "Environment":
        """The first ``n`` particles of this medium."""
        if not 1 <= n <= len(self):
            raise InvalidInputError(f"cannot take {n} particles from a medium of {len(self)}")
        return Environment(
            self.gaps[:n].copy(),
            self.sticky[:n].copy(),
            self.positions[:n].copy(),
            self.seed,
            self.trajectory_index,
            self.params_digest,
            self.outside_theorem_hypotheses,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["i", "xi", "eta", "S"])
        for i, (x, e, s) in enumerate(zip(self.gaps, self.sticky, self.positions), start=1):
            w.writerow([i, f"{x:.17g}", int(e), f"{s:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Environment":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["i", "xi", "eta", "S"]:
            raise InvalidInputError("environment CSV needs header i,xi,eta,S")
        body = [r for r in rows[1:] if r]
        for k, r in enumerate(body, start=1):
            if int(r[0]) != k:
                raise InvalidInputError(f"row {k}: index column out of sequence")
        gaps = np.array([float(r[1]) for r in body])
        sticky = np.array([int(r[2]) for r in body], dtype=np.int8)
        positions = np.array([float(r[3]) for r in body])
        env = cls.from_arrays(gaps, sticky)
        # Keep the recorded positions rather than re-accumulating them.
        return cls(env.gaps.copy(), env.sticky.copy(), positions)


def params_digest(params: "ModelParams") -> str:
    text = repr((params.force, params.stick_prob, params.tracer_mass0, params.gap_dist))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def trajectory_rng(master_seed: int, trajectory_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (gap, stickiness) generators for one trajectory."""
    if master_seed < 0 or trajectory_index < 0:
        raise InvalidInputError("seeds and trajectory indices must be non-negative")
    root = np.random.SeedSequence(entropy=master_seed, spawn_key=(trajectory_index,))
    gap_ss, stick_ss = root.spawn(2)
    return np.random.Generator(np.random.PCG64(gap_ss)), np.random.Generator(np.random.PCG64(stick_ss))


def _open_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    # rng.random() is a multiple of 2**-53 in [0, 1); shift into (0, 1).
    return rng.random(n) + 2.0**-54


def sample_gaps(spec: GapDistSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    a = spec.args
    if spec.kind == "exponential":
        return -a[0] * np.log(_open_uniform(rng, n))
    if spec.kind == "uniform":
        lo, hi = a
        gaps = lo + (hi - lo) * _open_uniform(rng, n)
        return gaps
    if spec.kind == "gamma":
        # numpy's standard_gamma is the Marsaglia-Tsang squeeze method.
        return a[1] * rng.standard_gamma(a[0], n)
    return np.full(n, a[0])


def sample_environment(
    params: "ModelParams", n: int, master_seed: int, trajectory_index: int = 0
) -> Environment:
    """Sample ``n`` gaps and stickiness flags for one trajectory."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    gap_rng, stick_rng = trajectory_rng(master_seed, trajectory_index)
    gaps = sample_gaps(params.gap_dist, gap_rng, n)
    sticky = (stick_rng.random(n) < params.stick_prob).astype(np.int8)
    return Environment(
        gaps,
        sticky,
        np.cumsum(gaps),
        seed=master_seed,
        trajectory_index=trajectory_index,
        params_digest=params_digest(params),
        outside_theorem_hypotheses=params.gap_dist.outside_theorem_hypotheses,
    )
