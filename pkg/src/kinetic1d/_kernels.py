"""Compiled inner loops (numba).

Kept free of Python objects so they compile in nopython mode.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def modified_recursion(xi, eta, force, mass0):
    n = xi.shape[0]
    v2_in = np.empty(n)
    v2_out = np.empty(n)
    t_bar = np.empty(n)
    mass = np.empty(n)
    v2 = 0.0
    m = mass0
    t = 0.0
    comp = 0.0
    for k in range(n):
        mass[k] = m
        vin2 = v2 + 2.0 * force * xi[k] / m
        v2_in[k] = vin2
        dt = 2.0 * xi[k] / (math.sqrt(vin2) + math.sqrt(v2))
        # Kahan-compensated absolute time.
        y = dt - comp
        s = t + y
        comp = (s - t) - y
        t = s
        t_bar[k] = t
        f = (m + eta[k] - 1.0) / (m + 1.0)
        v2 = vin2 * f * f
        v2_out[k] = v2
        m += eta[k]
    return v2_in, v2_out, t_bar, mass


@njit(cache=True)
def linrec(decay, inc):
    """T[k] = decay[k] * T[k-1] + inc[k], T[-1] = 0."""
    n = decay.shape[0]
    out = np.empty(n)
    acc = 0.0
    for k in range(n):
        acc = decay[k] * acc + inc[k]
        out[k] = acc
    return out


@njit(cache=True)
def tail_coefficients(zeta, n):
    """a[j-1] = j**(zeta-1) * sum_{i=j}^{n} i**(-zeta), by backward recursion."""
    a = np.empty(n)
    acc = 0.0
    for j in range(n, 0, -1):
        if j == n:
            acc = 1.0 / j
        else:
            acc = 1.0 / j + (j / (j + 1.0)) ** (zeta - 1.0) * acc
        a[j - 1] = acc
    return a


@njit(cache=True)
def fixed_step_oracle(gaps, sticky, force, mass0, n_contacts, dt, max_events):
    """Naive fixed-step integrator with per-step crossing detection.

    Each step of ``dt`` is checked for crossings against the end-of-step
    positions; a detected crossing is placed inside the step by linear
    interpolation of the gap, everything is advanced to that instant, the
    collision is resolved and the remainder of the step is integrated.

    Returns event arrays (time, kind, particle id, tracer velocity after) and
    the event count. kind: 0 sticky first contact, 1 elastic first contact,
    2 recollision.
    """
    n = gaps.shape[0]
    pos = np.empty(n)
    acc_pos = 0.0
    for k in range(n):
        acc_pos += gaps[k]
        pos[k] = acc_pos
    vel = np.zeros(n)
    # 0 standing, 1 moving, 2 absorbed
    state = np.zeros(n, dtype=np.int64)
    ev_t = np.empty(max_events)
    ev_kind = np.empty(max_events, dtype=np.int64)
    ev_id = np.empty(max_events, dtype=np.int64)
    ev_v = np.empty(max_events)
    n_ev = 0
    q = 0.0
    v = 0.0
    m = mass0
    step = 0
    nxt = 0
    contacts = 0
    while contacts < n_contacts and n_ev < max_events:
        used = 0.0
        rem = dt
        while True:
            a = force / m
            dq = v * rem + 0.5 * a * rem * rem
            best = -1
            best_s = 0.0
            for k in range(min(nxt + 1, n)):
                if state[k] == 2:
                    continue
                if state[k] == 0 and k != nxt:
                    continue
                d0 = pos[k] - q
                if d0 < 0.0 or (d0 == 0.0 and v <= vel[k]):
                    continue
                d1 = d0 + vel[k] * rem - dq
                if d1 > 0.0:
                    continue
                s = rem * d0 / (d0 - d1)
                if best < 0 or s < best_s:
                    best = k
                    best_s = s
            if best < 0:
                for k in range(nxt):
                    if state[k] == 1:
                        pos[k] += vel[k] * rem
                q += dq
                v += a * rem
                break
            s = best_s
            for k in range(nxt):
                if state[k] == 1:
                    pos[k] += vel[k] * s
            q += v * s + 0.5 * a * s * s
            v += a * s
            used += s
            rem -= s
            k = best
            if state[k] == 0:
                contacts += 1
                nxt += 1
                if sticky[k] == 1:
                    v = m * v / (m + 1.0)
                    m += 1.0
                    state[k] = 2
                    ev_kind[n_ev] = 0
                else:
                    rel = v
                    v = v - 2.0 * rel / (m + 1.0)
                    vel[k] = v + rel
                    state[k] = 1
                    ev_kind[n_ev] = 1
            else:
                rel = v - vel[k]
                v = v - 2.0 * rel / (m + 1.0)
                vel[k] = v + rel
                ev_kind[n_ev] = 2
            pos[k] = q
            ev_t[n_ev] = step * dt + used
            ev_id[n_ev] = k + 1
            ev_v[n_ev] = v
            n_ev += 1
            if contacts >= n_contacts or n_ev >= max_events:
                break
        step += 1
    return ev_t[:n_ev], ev_kind[:n_ev], ev_id[:n_ev], ev_v[:n_ev]
