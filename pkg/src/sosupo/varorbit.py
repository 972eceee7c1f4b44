"""Periodic orbits as minimizers of a discrete variational cost.

A loop of N points a_0..a_{N-1} with period T is scored by the midpoint rule

    C = N/(2T) * sum_i | a_{i+1} - a_i - (T/N) h((a_i + a_{i+1})/2) |^2,

with a_N = a_0. C vanishes on discretised periodic orbits of h, so a damped
Gauss-Newton (Levenberg-Marquardt) iteration on (a_0..a_{N-1}, T) converges
an approximate loop onto one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

MIN_POINTS = 16
COST_TOL = 1e-10
MIN_ARC_LENGTH = 1e-3


@dataclass
class OrbitGuess:
    points: np.ndarray  # (N, n)
    T: float
    k: float = 0.0

    def __post_init__(self):
        self.points = np.array(self.points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("orbit points must form an (N, n) array")
        if len(self.points) < MIN_POINTS:
            raise ValueError(f"an orbit needs at least {MIN_POINTS} points, got {len(self.points)}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("orbit points must be finite")
        self.T = float(self.T)
        self.k = float(self.k)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]


@dataclass
class PeriodicOrbit(OrbitGuess):
    final_cost: float = np.nan
    iterations: int = 0
    converged: bool = False
    degenerate: bool = False
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        super().__post_init__()
        if not self.T > 0:
            raise ValueError("period must be positive")

    def arc_length(self) -> float:
        return arc_length(self.points)


def arc_length(points) -> float:
    d = np.roll(points, -1, axis=0) - points
    return float(np.sum(np.linalg.norm(d, axis=1)))


def _check(g: OrbitGuess, cf):
    if not g.T > 0:
        raise ValueError(f"period must be positive, got {g.T}")
    if g.n != cf.n:
        raise ValueError("orbit and field dimensions differ")


def _defects(P, T, cf):
    N = len(P)
    nxt = np.roll(P, -1, axis=0)
    mid = 0.5 * (P + nxt)
    H = cf(mid)
    return nxt - P - (T / N) * H, mid, H


def cost(g: OrbitGuess, cf) -> float:
    _check(g, cf)
    E, _, _ = _defects(g.points, g.T, cf)
    return float(g.N / (2.0 * g.T) * np.sum(E * E))


def residuals_and_jacobian(g: OrbitGuess, cf):
    """Scaled defects r (length N*n) and the sparse Jacobian over (a_0..a_{N-1}, T)."""
    _check(g, cf)
    P, T = g.points, g.T
    N, n = P.shape
    s = np.sqrt(N / (2.0 * T))
    E, mid, H = _defects(P, T, cf)
    r = (s * E).ravel()
    Jm = cf.jacobian(mid)  # (N, n, n)
    half = 0.5 * (T / N) * Jm
    eye = np.eye(n)
    Bi = s * (-eye[None] - half)  # d r_i / d a_i
    Bn = s * (eye[None] - half)  # d r_i / d a_{i+1}
    rows = np.arange(N * n).reshape(N, n)
    cols_i = rows
    cols_n = np.roll(rows, -1, axis=0)
    R = np.repeat(rows[:, :, None], n, axis=2)
    Ci = np.repeat(cols_i[:, None, :], n, axis=1)
    Cn = np.repeat(cols_n[:, None, :], n, axis=1)
    dT = (-s / N) * H - E * (s / (2.0 * T))
    data = np.concatenate([Bi.ravel(), Bn.ravel(), dT.ravel()])
    ri = np.concatenate([R.ravel(), R.ravel(), rows.ravel()])
    ci = np.concatenate([Ci.ravel(), Cn.ravel(), np.full(N * n, N * n)])
    J = sp.csr_matrix((data, (ri, ci)), shape=(N * n, N * n + 1))
    return r, J


def converge(g: OrbitGuess, cf, cost_tol: float = COST_TOL, max_iter: int = 500,
             ftol: float = 1e-16, xtol: float = 1e-16, lam0: float = 1e-3,
             max_escalations: int = 20) -> PeriodicOrbit:
    """Levenberg-Marquardt on the variational cost, T included as an unknown."""
    _check(g, cf)
    N, n = g.points.shape
    z = np.concatenate([g.points.ravel(), [g.T]])

    def unpack(v):
        return OrbitGuess(v[:-1].reshape(N, n), v[-1], cf.k)

    r, J = residuals_and_jacobian(unpack(z), cf)
    c = 0.5 * float(r @ r)
    lam = lam0
    history = [c]
    escal = 0
    it = 0
    message = "iteration limit"
    for it in range(1, max_iter + 1):
        if c == 0.0:
            message = "zero cost"
            break
        JtJ = (J.T @ J).tocsc()
        grad = J.T @ r
        d = JtJ.diagonal().copy()
        d = np.maximum(d, 1e-12 * max(d.max(), 1.0))
        accepted = False
        while not accepted:
            A = (JtJ + lam * sp.diags(d)).tocsc()
            try:
                step = -spla.splu(A).solve(grad)
            except RuntimeError:
                step = None
            if step is not None and np.all(np.isfinite(step)) and z[-1] + step[-1] > 0:
                zt = z + step
                rt, Jt = residuals_and_jacobian(unpack(zt), cf)
                ct = 0.5 * float(rt @ rt)
                if np.isfinite(ct) and ct < c:
                    accepted = True
                    break
            lam *= 3.0
            escal += 1
            if escal >= max_escalations:
                break
        if not accepted:
            message = f"cost did not decrease after {max_escalations} damping escalations"
            break
        escal = 0
        lam = max(lam / 3.0, 1e-20)
        rel = (c - ct) / c
        snorm = float(np.linalg.norm(step))
        z, r, J, c = zt, rt, Jt, ct
        history.append(c)
        if rel <= ftol:
            message = "relative cost change below tolerance"
            break
        if snorm <= xtol:
            message = "step norm below tolerance"
            break
    final = unpack(z)
    C = cost(final, cf)
    orbit = PeriodicOrbit(final.points, final.T, cf.k, C, it, C <= cost_tol, False, message, history)
    if orbit.converged and orbit.arc_length() < MIN_ARC_LENGTH:
        orbit.converged = False
        orbit.degenerate = True
        orbit.message = f"collapsed onto an equilibrium (arc length {orbit.arc_length():.3g})"
    log.debug("converge: %s after %d iterations, cost %.3g", orbit.message, it, C)
    return orbit


def shooting_error(orbit: OrbitGuess, cf, rtol: float = 1e-10, atol: float = 1e-10) -> float:
    """|a(T | a_0) - a_0| / |a_0| under the field cf."""
    from .flow import integrate

    a0 = orbit.points[0]
    traj = integrate(cf, a0, (0.0, orbit.T), rtol=rtol, atol=atol)
    if traj.diverged:
        return np.inf
    return float(np.linalg.norm(traj.states[-1] - a0) / np.linalg.norm(a0))


def orbit_average(phi, orbit: OrbitGuess, cf=None, rtol: float = 1e-11, atol: float = 1e-12) -> float:
    """Time average of phi over one period.

    With a field, the average is taken along the trajectory integrated from
    the first point for one period; without one, the midpoint rule on the
    discrete loop is used.
    """
    from .polyalg import PolyMap

    if cf is None:
        mid = 0.5 * (orbit.points + np.roll(orbit.points, -1, axis=0))
        return float(np.mean(PolyMap([phi])(mid)[:, 0]))
    from .flow import integrate, time_average

    traj = integrate(cf, orbit.points[0], (0.0, orbit.T), rtol=rtol, atol=atol)
    return time_average(phi, traj)


def extrapolated_average(phi, orbit: PeriodicOrbit, cf, N_min: int = 1024, cost_tol: float = COST_TOL):
    """Richardson-extrapolated loop average of phi.

    The midpoint loop is O(h^2) accurate, so its average carries an
    O((T/N)^2) bias. The orbit is re-converged on grids N and 2N
    (N >= ``N_min``) and the two averages are combined as (4 a_2N - a_N) / 3.
    Returns ``(average, error_estimate, finest_orbit)``; the error estimate
    is |a_2N - a_N| / 3. If a refinement fails to converge, the finest
    converged orbit's raw average is returned with an infinite error estimate.
    """
    coarse = orbit
    if orbit.N < N_min:
        coarse = converge(resample(orbit, N_min), cf, cost_tol=cost_tol)
        if not coarse.converged:
            return orbit_average(phi, orbit), np.inf, orbit
    fine = converge(resample(coarse, 2 * coarse.N), cf, cost_tol=cost_tol)
    if not fine.converged:
        return orbit_average(phi, coarse), np.inf, coarse
    a1, a2 = orbit_average(phi, coarse), orbit_average(phi, fine)
    return (4.0 * a2 - a1) / 3.0, abs(a2 - a1) / 3.0, fine


# ---------------------------------------------------------------------------
# orbit files
# ---------------------------------------------------------------------------
def dump_orbit(orbit: OrbitGuess) -> str:
    cst = getattr(orbit, "final_cost", np.nan)
    head = (f"# n={orbit.n}, N={orbit.N}, T={orbit.T:.17g}, k={orbit.k:.17g}, cost={cst:.17g}")
    lines = [head]
    if isinstance(orbit, PeriodicOrbit):
        lines.append(f"# converged={int(orbit.converged)}, iterations={orbit.iterations}, "
                     f"degenerate={int(orbit.degenerate)}")
    lines.extend(",".join(f"{v:.17g}" for v in row) for row in orbit.points)
    return "\n".join(lines) + "\n"


def save_orbit(orbit: OrbitGuess, path) -> None:
    Path(path).write_text(dump_orbit(orbit))


def parse_orbit(text: str) -> PeriodicOrbit:
    meta: dict[str, str] = {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for item in line[1:].split(","):
                key, eq, val = item.strip().partition("=")
                if eq:
                    meta[key.strip()] = val.strip()
            continue
        try:
            rows.append([float(t) for t in line.split(",")])
        except ValueError:
            raise ValueError(f"line {lineno}: malformed state row") from None
    for key in ("n", "N", "T", "k"):
        if key not in meta:
            raise ValueError(f"orbit header is missing '{key}='")
    n, N = int(meta["n"]), int(meta["N"])
    pts = np.array(rows, dtype=float)
    if pts.shape != (N, n):
        raise ValueError(f"orbit file declares {N} x {n} states but holds {pts.shape}")
    return PeriodicOrbit(pts, float(meta["T"]), float(meta["k"]), float(meta.get("cost", "nan")),
                         int(meta.get("iterations", 0)), bool(int(meta.get("converged", 0))),
                         bool(int(meta.get("degenerate", 0))))


def load_orbit(path) -> PeriodicOrbit:
    return parse_orbit(Path(path).read_text())


def resample(orbit: OrbitGuess, N: int) -> OrbitGuess:
    """Trigonometric interpolation of the loop onto N equispaced points."""
    if N < MIN_POINTS:
        raise ValueError(f"need N >= {MIN_POINTS}, got {N}")
    M = orbit.N
    F = np.fft.rfft(orbit.points, axis=0)
    G = np.zeros((N // 2 + 1, orbit.n), dtype=complex)
    h = min(len(F), len(G))
    G[:h] = F[:h]
    # the Nyquist mode of an even grid is shared between +/- frequencies
    if M % 2 == 0 and h == M // 2 + 1 and N > M:
        G[M // 2] *= 0.5
    if N % 2 == 0 and h == N // 2 + 1 and N < M:
        G[N // 2] = 2.0 * G[N // 2].real
    return OrbitGuess(np.fft.irfft(G, n=N, axis=0) * (N / M), orbit.T, orbit.k)


def prime_period(orbit: PeriodicOrbit, rel_tol: float = 1e-4) -> PeriodicOrbit:
    """Unwind a loop that traverses the same orbit several times.

    If shifting the points by N/m reproduces them (relative to the orbit's
    size) for some m >= 2, the first N/m points with period T/m are returned
    instead; otherwise the orbit itself.
    """
    P = orbit.points
    N = orbit.N
    size = float(np.max(np.ptp(P, axis=0))) or 1.0
    for m in range(N // MIN_POINTS, 1, -1):
        if N % m:
            continue
        if np.max(np.abs(np.roll(P, -N // m, axis=0) - P)) <= rel_tol * size:
            return PeriodicOrbit(P[: N // m], orbit.T / m, orbit.k, orbit.final_cost / m,
                                 orbit.iterations, orbit.converged, orbit.degenerate,
                                 f"{orbit.message}; unwound {m}-fold repetition", orbit.history)
    return orbit
