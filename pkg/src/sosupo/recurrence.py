"""Near-recurrences R(t, T) = |a(t) - a(t-T)| / |a(t)| and orbit guesses cut from them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import minimum_filter
from scipy.optimize import minimize

from .varorbit import MIN_POINTS, OrbitGuess

THRESHOLD = 0.025
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class RecurrenceEvent:
    t: float
    T: float
    R: float


def recurrence_value(traj, t: float, T: float) -> float:
    a = traj(t)
    na = np.linalg.norm(a)
    if na < NORM_FLOOR:
        return np.inf
    return float(np.linalg.norm(a - traj(t - T)) / na)


def _grid_R(traj, tgrid, Tgrid, dt, dT):
    """R on the (t, T) grid; rows follow t, columns follow T."""
    A = traj(tgrid)
    nrm = np.linalg.norm(A, axis=1)
    bad = nrm < NORM_FLOOR
    nrm[bad] = 1.0
    R = np.empty((len(tgrid), len(Tgrid)))
    aligned = math.isclose(dt, dT, rel_tol=1e-12)
    if aligned:
        # t_i - T_j = t_0 - T_max + (i + nT - 1 - j) dt: one shared uniform sample
        off = len(Tgrid) - 1
        back = traj(tgrid[0] - Tgrid[-1] + dt * np.arange(len(tgrid) + off))
        for j in range(len(Tgrid)):
            R[:, j] = np.linalg.norm(A - back[off - j: off - j + len(tgrid)], axis=1) / nrm
    else:
        for j, T in enumerate(Tgrid):
            R[:, j] = np.linalg.norm(A - traj(tgrid - T), axis=1) / nrm
    R[bad, :] = np.inf
    return R


def scan(traj, T_min: float, T_max: float, threshold: float = THRESHOLD, dt: float | None = None,
         dT: float | None = None, t_start: float | None = None, polish: bool = True,
         max_events: int | None = None, polish_limit: int = 100) -> list[RecurrenceEvent]:
    """Local minima of R below ``threshold`` on a (t, T) grid, best first.

    Only the ``polish_limit`` best grid events are refined; the rest are
    reported at grid resolution.
    """
    if not 0 < T_min < T_max:
        raise ValueError("need 0 < T_min < T_max")
    span = traj.t1 - traj.t0
    if span <= T_max:
        raise ValueError(f"trajectory span {span:.6g} does not exceed T_max = {T_max:.6g}")
    dt = T_max / 500.0 if dt is None else float(dt)
    dT = T_max / 500.0 if dT is None else float(dT)
    lo = traj.t0 + T_max if t_start is None else max(t_start, traj.t0 + T_max)
    nT = int(np.floor((T_max - T_min) / dT + 1e-9)) + 1
    Tgrid = T_max - dT * np.arange(nT)[::-1]
    nt = int(np.floor((traj.t1 - lo) / dt + 1e-9)) + 1
    if nt < 1:
        return []
    tgrid = lo + dt * np.arange(nt)
    R = _grid_R(traj, tgrid, Tgrid, dt, dT)
    Rf = np.where(np.isfinite(R), R, np.inf)
    local = (Rf <= minimum_filter(Rf, size=3, mode="nearest")) & (Rf <= threshold)
    ii, jj = np.nonzero(local)
    order = np.argsort(Rf[ii, jj], kind="stable")
    events: list[RecurrenceEvent] = []
    for q in order:
        t, T, val = tgrid[ii[q]], Tgrid[jj[q]], Rf[ii[q], jj[q]]
        if any(abs(t - e.t) <= dt * (1 + 1e-9) and abs(T - e.T) <= dT * (1 + 1e-9) for e in events):
            continue
        events.append(RecurrenceEvent(float(t), float(T), float(val)))
    if polish:
        events = ([_polish(traj, e, dt, dT, T_min, T_max) for e in events[:polish_limit]]
                  + events[polish_limit:])
        events.sort(key=lambda e: e.R)
        kept: list[RecurrenceEvent] = []
        for e in events:
            if any(abs(e.t - o.t) <= dt and abs(e.T - o.T) <= dT for o in kept):
                continue
            kept.append(e)
        events = kept
    if max_events is not None:
        events = events[:max_events]
    return events


def _polish(traj, ev: RecurrenceEvent, dt, dT, T_min, T_max, iters: int = 60) -> RecurrenceEvent:
    """A few Nelder-Mead steps on R, kept inside the valid (t, T) region."""

    def obj(v):
        t, T = v
        if not (T_min <= T <= T_max) or t > traj.t1 or t - T < traj.t0:
            return np.inf
        return recurrence_value(traj, t, T)

    x0 = np.array([ev.t, ev.T])
    simplex = np.array([x0, x0 + [0.5 * dt, 0.0], x0 + [0.0, 0.5 * dT]])
    res = minimize(obj, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "maxiter": iters, "xatol": 1e-12, "fatol": 1e-15})
    if np.isfinite(res.fun) and res.fun < ev.R:
        return RecurrenceEvent(float(res.x[0]), float(res.x[1]), float(res.fun))
    return ev


def default_N(T: float, max_dt: float = 0.02, cap: int = 1024) -> int:
    """Smallest power of two with T/N <= max_dt, between 16 and ``cap``."""
    N = MIN_POINTS
    while T / N > max_dt and N < cap:
        N *= 2
    return min(N, cap)


def extract_segment(traj, ev: RecurrenceEvent, N: int | None = None, k: float = 0.0) -> OrbitGuess:
    if N is None:
        N = default_N(ev.T)
    if N < MIN_POINTS:
        raise ValueError(f"need N >= {MIN_POINTS}, got {N}")
    start = ev.t - ev.T
    if start < traj.t0 - 1e-12 or ev.t > traj.t1 + 1e-12:
        raise ValueError(f"segment [{start:.6g}, {ev.t:.6g}] is not inside the trajectory "
                         f"[{traj.t0:.6g}, {traj.t1:.6g}]")
    ts = start + ev.T * np.arange(N) / N
    return OrbitGuess(traj(ts), ev.T, k)


def save_events(events, path) -> None:
    lines = ["t,T,R"] + [f"{e.t:.17g},{e.T:.17g},{e.R:.17g}" for e in events]
    Path(path).write_text("\n".join(lines) + "\n")


def load_events(path) -> list[RecurrenceEvent]:
    out = []
    for line in Path(path).read_text().splitlines()[1:]:
        if line.strip():
            t, T, R = (float(v) for v in line.split(","))
            out.append(RecurrenceEvent(t, T, R))
    return out
