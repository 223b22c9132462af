"""Event-driven simulation of the original dynamics, recollisions included.

The tracer position is kept as the last first-contact site ``S_i`` plus an
offset accumulated since then. Without intervening recollisions the next
flight covers exactly ``xi_{i+1}`` and is computed in squared-velocity
space with the modified recursion's arithmetic, so the two processes agree
bit for bit on any stretch free of recollisions.

Movers that are at least as fast as the tracer cannot be caught until the
tracer reaches their speed (collisions only slow the tracer down), so they
are parked in a heap keyed by speed and brought back only when that speed
is reachable before the next candidate event.
"""
from __future__ import annotations

import csv
import heapq
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from ._kernels import fixed_step_oracle
from .environment import Environment
from .errors import ConsistencyError, InvalidInputError
from .model import (
    GRAZING_SPEED,
    ModelParams,
    TracerState,
    _catch_up,
    flight_time,
    resolve_elastic,
    resolve_sticky,
    torricelli_velocity,
)
from .modified import simulate_modified

log = logging.getLogger(__name__)

TIE_REL = 1e-12
PAST_TOL = 1e-9

FIRST_CONTACT = "first_contact"
RECOLLISION = "recollision"


@dataclass(frozen=True)
class MovingNeutral:
    """A neutral particle set in motion by an elastic contact.

    ``threshold`` is the tracer speed at which a pruned mover becomes
    reachable again; it is ``None`` while the mover is live.
    """

    id: int
    position_at: float
    velocity: float
    updated_at: float
    status: str = "live"
    threshold: Optional[float] = None

    def position(self, t: float) -> float:
        return self.position_at + self.velocity * (t - self.updated_at)


@dataclass(frozen=True)
class RecollisionEvent:
    time: float
    neutral_id: int
    v_before_tracer: float
    v_after_tracer: float
    v_neutral: float


@dataclass(frozen=True)
class EventLogEntry:
    time: float
    kind: str  # first_sticky | first_elastic | recollision
    particle_id: int
    V_before: float
    V_after: float
    v_neutral_before: Optional[float]
    v_neutral_after: Optional[float]
    mass_after: float
    Q: float


EVENT_LOG_HEADER = [
    "event_seq", "time", "kind", "particle_id", "V_before", "V_after",
    "v_neutral_before", "v_neutral_after", "mass_after", "Q",
]


@dataclass
class TrajectoryRecord:
    """History of the exact dynamics; per-contact arrays are indexed by ``i - 1``.

    ``delta_big[j-1]`` and ``delta_small[j-1]`` collect the recollisions that
    happen between first contacts ``j - 1`` and ``j``.
    """

    first_contact_times: np.ndarray
    v_at_contact: np.ndarray
    v_after_contact: np.ndarray
    v2_after_contact: np.ndarray  # squared, in recursion arithmetic
    mass: np.ndarray
    recollisions: list
    delta_big: np.ndarray
    delta_small: np.ndarray
    events: list = field(default_factory=list, repr=False)
    grazing_drops: int = 0

    @property
    def n(self) -> int:
        return len(self.first_contact_times)

    def positions(self, env: Environment) -> np.ndarray:
        return env.positions[: self.n]

    def event_log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(EVENT_LOG_HEADER)
        for seq, e in enumerate(self.events, start=1):
            w.writerow([
                seq,
                f"{e.time:.17g}",
                e.kind,
                e.particle_id,
                f"{e.V_before:.17g}",
                f"{e.V_after:.17g}",
                "" if e.v_neutral_before is None else f"{e.v_neutral_before:.17g}",
                "" if e.v_neutral_after is None else f"{e.v_neutral_after:.17g}",
                f"{e.mass_after:.17g}",
                f"{e.Q:.17g}",
            ])
        return buf.getvalue()


# -- event selection ---------------------------------------------------------


def _select(t, q, v, force, mass, standing, movers):
    """Earliest candidate among the standing particle and live movers.

    ``standing`` is ``(id, dx)`` or ``(id, dx, tau)`` with a precomputed
    flight time, or ``None``; ``movers`` maps id to MovingNeutral. Returns
    ``(tau, kind, id, gap)`` or ``None``.
    """
    accel = force / mass
    cands = []
    if standing is not None:
        sid, dx = standing[0], standing[1]
        if dx < -PAST_TOL * max(1.0, abs(q)):
            raise ConsistencyError(
                "tracer is past a standing particle", {"t": t, "Q": q, "id": sid, "dx": dx}
            )
        dx = max(dx, 0.0)
        if len(standing) > 2:
            cands.append((standing[2], dx, 0, sid))
        elif accel > 0.0 or v > 0.0:
            tau = flight_time(v, force, mass, dx) if accel > 0.0 else dx / v
            cands.append((tau, dx, 0, sid))
    for mid, mv in movers.items():
        gap = mv.position(t) - q
        if gap < -PAST_TOL * max(1.0, abs(q)):
            raise ConsistencyError(
                "tracer passed a moving particle without collision",
                {"t": t, "Q": q, "V": v, "mover": mv, "gap": gap},
            )
        gap = max(gap, 0.0)
        tau = _catch_up(gap, v - mv.velocity, accel)
        if tau is not None:
            cands.append((tau, gap, 1, mid))
    if not cands:
        return None
    best = min(cands)
    tol = TIE_REL * max(1.0, t)
    tied = [c for c in cands if c[0] - best[0] < tol]
    # nearest target, then standing before moving, then lowest id
    tau, gap, moving, tid = min(tied, key=lambda c: (c[1], c[2], c[3]))
    if tau < -PAST_TOL:
        raise ConsistencyError("next event lies in the past", {"t": t, "tau": tau, "target": tid})
    return tau, RECOLLISION if moving else FIRST_CONTACT, tid, gap


def next_event(
    state: TracerState,
    next_standing: Optional[tuple[int, float]],
    movers: Iterable[MovingNeutral],
    force: float,
) -> Optional[tuple[float, str, int]]:
    """Time until the next collision, its kind and its target id.

    ``next_standing`` is ``(id, absolute position)``. Pruned movers are
    ignored. Returns ``None`` when nothing can ever be hit.
    """
    standing = None
    if next_standing is not None:
        standing = (next_standing[0], next_standing[1] - state.position)
    live = {m.id: m for m in movers if m.status == "live"}
    out = _select(state.time, state.position, state.velocity, force, state.mass, standing, live)
    return None if out is None else out[:3]


def prune_or_reinstate(state: TracerState, movers: Iterable[MovingNeutral]) -> list:
    """Park live movers the tracer cannot catch yet and revive reachable ones."""
    out = []
    for m in movers:
        if m.status == "live" and m.velocity >= state.velocity:
            out.append(replace(m, status="pruned", threshold=m.velocity))
        elif m.status == "pruned" and state.velocity >= m.threshold:
            out.append(replace(m, status="live", threshold=None))
        else:
            out.append(m)
    return out


# -- the simulator -----------------------------------------------------------


def simulate_exact(
    env: Environment,
    params: ModelParams,
    n_first_contacts: int,
    prune: bool = True,
    until: Optional[float] = None,
) -> TrajectoryRecord:
    """Run the exact dynamics until the ``n_first_contacts``-th first contact.

    With ``until`` set, events keep being processed up to that absolute
    time (the medium ends after the last particle of ``env``). Recollisions
    after the last recorded first contact are listed but belong to no
    Delta/delta interval.
    """
    n = n_first_contacts
    if not 0 <= n <= len(env):
        raise InvalidInputError(f"n_first_contacts must be in 0..{len(env)}")
    if params.degenerate and n > 0:
        log.warning("force is zero: the tracer never moves, trajectory truncated at i=0")
        n = 0
    F = params.force
    gaps, sticky = env.gaps.tolist(), env.sticky.tolist()

    t_contact = np.empty(n)
    v_at = np.empty(n)
    v_after = np.empty(n)
    v2_after = np.empty(n)
    mass_at = np.empty(n)
    d_big = np.zeros(n)
    d_small = np.zeros(n)
    recs: list = []
    events: list = []

    t, comp = 0.0, 0.0  # Kahan-summed clock
    base, dq = 0.0, 0.0  # Q = base + dq
    v, m = 0.0, params.tracer_mass0
    # squared speed carried in recursion arithmetic; None after a recollision
    v2: Optional[float] = 0.0
    live: dict = {}
    parked: list = []  # heap of (speed, id, MovingNeutral)
    grazing = 0
    contacts = 0

    def advance(tau):
        nonlocal t, comp
        y = tau - comp
        s = t + y
        comp = (s - t) - y
        t = s

    def dump(reason):
        return {
            "reason": reason, "t": t, "Q": base + dq, "V": v, "M": m,
            "contacts": contacts, "live": list(live.values()), "parked": len(parked),
        }

    horizon = -math.inf if until is None or params.degenerate else until
    while contacts < n or t < horizon:
        q = base + dq
        accel = F / m
        standing = None
        if contacts < len(env):
            if v2 is not None:
                xi = gaps[contacts]
                v_in2 = v2 + 2.0 * F * xi / m
                standing = (contacts + 1, xi, 2.0 * xi / (math.sqrt(v_in2) + math.sqrt(v2)))
            else:
                standing = (contacts + 1, gaps[contacts] - dq)
        try:
            best = _select(t, q, v, F, m, standing, live)
            while parked:
                # nothing else pending: the tracer will reach the slowest parked speed
                limit = math.inf if best is None else best[0] + TIE_REL * max(1.0, t)
                if (parked[0][0] - v) / accel > limit:
                    break
                while parked and (parked[0][0] - v) / accel <= limit:
                    _, mid, mv = heapq.heappop(parked)
                    live[mid] = replace(mv, status="live", threshold=None)
                best = _select(t, q, v, F, m, standing, live)
        except ConsistencyError as exc:
            exc.dump = {**dump(str(exc)), **(exc.dump or {})}
            raise
        if best is None or (contacts >= n and t + best[0] > horizon):
            break
        tau, kind, tid, _ = best

        if kind == FIRST_CONTACT:
            k = tid - 1
            if k >= n:
                break
            if v2 is None:
                v_in = torricelli_velocity(v, F, m, max(gaps[k] - dq, 0.0))
                v_in2 = v_in * v_in
            else:
                v_in = math.sqrt(v_in2)
            advance(tau)
            base, dq = float(env.positions[k]), 0.0
            t_contact[k], v_at[k], mass_at[k] = t, v_in, m
            if sticky[k]:
                out = resolve_sticky(v_in, m)
                events.append(EventLogEntry(t, "first_sticky", tid, v_in, out.tracer_velocity_after,
                                            None, None, out.tracer_mass_after, base))
            else:
                out = resolve_elastic(v_in, m, 0.0)
                mv = MovingNeutral(tid, base, out.neutral_velocity_after, t)
                if prune:
                    heapq.heappush(parked, (mv.velocity, tid, replace(mv, status="pruned", threshold=mv.velocity)))
                else:
                    live[tid] = mv
                events.append(EventLogEntry(t, "first_elastic", tid, v_in, out.tracer_velocity_after,
                                            0.0, out.neutral_velocity_after, m, base))
            f = (m + sticky[k] - 1.0) / (m + 1.0)
            v2 = v_in2 * f * f
            v, m = out.tracer_velocity_after, out.tracer_mass_after
            v_after[k] = v
            v2_after[k] = v2
            contacts += 1
        else:
            mv = live.pop(tid)
            v_hit = v + accel * tau
            dq += tau * 0.5 * (v + v_hit)
            advance(tau)
            q = base + dq
            if v_hit - mv.velocity < GRAZING_SPEED:
                grazing += 1
                log.warning("grazing contact with particle %d at t=%.17g dropped", tid, t)
                v, v2 = v_hit, None
                continue
            out = resolve_elastic(v_hit, m, mv.velocity)
            recs.append(RecollisionEvent(t, tid, v_hit, out.tracer_velocity_after, mv.velocity))
            if contacts < n:
                # attributed to the interval ending at the next first contact
                d_big[contacts] += v_hit * v_hit - out.tracer_velocity_after**2
                d_small[contacts] += v_hit - mv.velocity
            events.append(EventLogEntry(t, "recollision", tid, v_hit, out.tracer_velocity_after,
                                        mv.velocity, out.neutral_velocity_after, m, q))
            v = out.tracer_velocity_after
            v2 = None
            new = MovingNeutral(tid, q, out.neutral_velocity_after, t)
            if prune:
                heapq.heappush(parked, (new.velocity, tid, replace(new, status="pruned", threshold=new.velocity)))
            else:
                live[tid] = new

        if prune:
            for mid in [i for i, x in live.items() if x.velocity >= v]:
                x = live.pop(mid)
                heapq.heappush(parked, (x.velocity, mid, replace(x, status="pruned", threshold=x.velocity)))

    return TrajectoryRecord(t_contact, v_at, v_after, v2_after, mass_at, recs, d_big, d_small, events, grazing)


# -- coupling with the modified process ---------------------------------------


@dataclass(frozen=True)
class CouplingReport:
    n: int
    dt_scaled: float
    dv2_scaled: float
    delta_sum: float
    recollision_count: int
    identity_gap: float  # V2bar_n - V2_n minus sum_j Delta(j) prod_{k>=j} c_k

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "dt_scaled": self.dt_scaled,
            "dv2_scaled": self.dv2_scaled,
            "delta_sum": self.delta_sum,
            "recollision_count": self.recollision_count,
            "identity_gap": self.identity_gap,
        }


def coupling_report(
    env: Environment, params: ModelParams, n: int, record: Optional[TrajectoryRecord] = None
) -> CouplingReport:
    """Differences between exact and modified dynamics on the same medium."""
    if not 1 <= n <= len(env):
        raise InvalidInputError(f"n must be in 1..{len(env)}")
    if record is None:
        record = simulate_exact(env, params, n)
    if record.n < n:
        raise InvalidInputError("trajectory record shorter than n")
    mod = simulate_modified(env.head(n), params)
    rn = math.sqrt(n)
    v2_exact = record.v2_after_contact[n - 1]
    dv2 = mod.v2_out[n - 1] - v2_exact
    eta = env.sticky[:n].astype(np.float64)
    fac = ((mod.mass + eta - 1.0) / (mod.mass + 1.0)) ** 2
    # suffix products prod_{k=j}^{n} c_k
    suffix = np.cumprod(fac[::-1])[::-1]
    predicted = math.fsum(record.delta_big[:n] * suffix)
    n_rec = sum(1 for r in record.recollisions if r.time <= record.first_contact_times[n - 1])
    return CouplingReport(
        n=n,
        dt_scaled=(record.first_contact_times[n - 1] - mod.t_bar[n - 1]) / rn,
        dv2_scaled=rn * dv2,
        delta_sum=math.fsum(record.delta_small[:n]),
        recollision_count=n_rec,
        identity_gap=dv2 - predicted,
    )


# -- fixed-step reference ----------------------------------------------------

ORACLE_KINDS = ("first_sticky", "first_elastic", "recollision")


@dataclass(frozen=True)
class OracleLog:
    times: np.ndarray
    kinds: np.ndarray
    ids: np.ndarray
    velocities: np.ndarray


def fixed_step_reference(
    env: Environment, params: ModelParams, n_first_contacts: int, dt: float = 1e-6, max_events: int = 100_000
) -> OracleLog:
    """Brute-force integrator that checks for crossings after every step of ``dt``.

    Crossings are located inside the detecting step by linear interpolation
    of the gap, so event times carry an O(dt) error from the fixed-step
    bookkeeping rather than a full-step lag.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    if not 1 <= n_first_contacts <= len(env):
        raise InvalidInputError(f"n_first_contacts must be in 1..{len(env)}")
    t, k, i, v = fixed_step_oracle(
        np.ascontiguousarray(env.gaps, dtype=np.float64),
        np.ascontiguousarray(env.sticky, dtype=np.int64),
        float(params.force),
        float(params.tracer_mass0),
        n_first_contacts,
        dt,
        max_events,
    )
    return OracleLog(t, k, i, v)
