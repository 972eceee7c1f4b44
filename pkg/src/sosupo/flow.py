"""Uncontrolled and controlled vector fields, adaptive integration, time averages.

The controlled fields push trajectories down the gradient of the gap
polynomial D::

    gradient control    h = f - k grad D
    projected control   h = f - k (grad D - f (f . grad D) / |f|^2)

The projected form only acts across the flow, so an orbit lying in the zero
set of D is left untouched while nearby trajectories are pulled onto it.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .polyalg import DimensionError, PolyMap, Polynomial

DEFAULT_K = 0.25
DIVERGENCE_CAP = 1e6


class ControlMode(str, enum.Enum):
    UNCONTROLLED = "uncontrolled"
    GRADIENT = "gradient"
    PROJECTED = "projected"


@dataclass(frozen=True, eq=False)
class ControlledField:
    system: object
    gap: object = None
    k: float = 0.0
    mode: ControlMode = ControlMode.UNCONTROLLED
    eta: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "mode", ControlMode(self.mode))
        if self.k < 0:
            raise ValueError("control amplitude k must be nonnegative")
        if self.mode != ControlMode.UNCONTROLLED and self.gap is None:
            raise ValueError(f"{self.mode.value} control needs a gap polynomial")
        if self.gap is not None and self.gap.n != self.system.n:
            raise DimensionError("gap polynomial and system dimensions differ")

    @property
    def n(self) -> int:
        return self.system.n

    def with_k(self, k: float) -> "ControlledField":
        return ControlledField(self.system, self.gap, float(k), self.mode, self.eta)

    @property
    def active(self) -> bool:
        return self.mode != ControlMode.UNCONTROLLED and self.k != 0.0

    def _jac_map(self) -> PolyMap:
        jm = self.__dict__.get("_jm")
        if jm is None:
            jm = PolyMap([fi.derivative(j) for fi in self.system.f for j in range(self.n)])
            object.__setattr__(self, "_jm", jm)
        return jm

    def __call__(self, x) -> np.ndarray:
        """h_k at a point ``(n,)`` or at the rows of ``(N, n)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        F = self.system.field_map()(X)
        if self.active:
            G = self.gap.grad(X)
            if self.mode == ControlMode.GRADIENT:
                F = F - self.k * G
            else:
                q = np.einsum("ij,ij->i", F, F)
                s = np.einsum("ij,ij->i", F, G)
                proj = np.where((q >= self.eta)[:, None], F * (s / np.maximum(q, self.eta))[:, None], 0.0)
                F = F - self.k * (G - proj)
        return F[0] if single else F

    def jacobian(self, x) -> np.ndarray:
        """dh/da, shape ``(n, n)`` or ``(N, n, n)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x[None, :] if single else x
        n = self.n
        J = self._jac_map()(X).reshape(-1, n, n)
        if self.active:
            H = self.gap.hessian(X)
            if self.mode == ControlMode.GRADIENT:
                J = J - self.k * H
            else:
                F = self.system.field_map()(X)
                G = self.gap.grad(X)
                q = np.einsum("ij,ij->i", F, F)
                s = np.einsum("ij,ij->i", F, G)
                use = q >= self.eta
                qq = np.maximum(q, self.eta)
                ds = np.einsum("nji,nj->ni", J, G) + np.einsum("nij,nj->ni", H, F)
                dq = 2.0 * np.einsum("nji,nj->ni", J, F)
                dP = (J * (s / qq)[:, None, None]
                      + np.einsum("ni,nj->nij", F, ds) / qq[:, None, None]
                      - np.einsum("ni,nj->nij", F, dq) * (s / qq**2)[:, None, None])
                dP[~use] = 0.0
                J = J - self.k * (H - dP)
        return J[0] if single else J


def field_eval(cf: ControlledField, x) -> np.ndarray:
    return cf(x)


def uncontrolled(system) -> ControlledField:
    return ControlledField(system)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------
class IntegrationError(RuntimeError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    dense: object = None  # scipy OdeSolution
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def __call__(self, t) -> np.ndarray:
        """Dense interpolant; ``t`` scalar -> ``(n,)``, array -> ``(len(t), n)``."""
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        t = np.asarray(t, dtype=float)
        out = self.dense(t)
        return out if t.ndim == 0 else out.T

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        lines = ["t," + ",".join(f"a{i + 1}" for i in range(n))]
        for t, x in zip(self.times, self.states):
            lines.append(",".join(f"{v:.17g}" for v in (t, *x)))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(arr[:, 0], arr[:, 1:])


def integrate(cf: ControlledField, a0, t_span, rtol: float = 1e-10, atol: float = 1e-10,
              cap: float = DIVERGENCE_CAP, max_step: float = np.inf, method: str = "RK45") -> Trajectory:
    """Dormand-Prince 5(4) with dense output; stops cleanly at |a| > cap.

    ``method`` names any scipy integrator. Strong gradient control makes the
    field stiff, and the implicit ones ("LSODA", "BDF", "Radau") then get the
    analytic Jacobian of the controlled field.
    """
    a0 = np.asarray(a0, dtype=float)
    if a0.shape != (cf.n,) or not np.all(np.isfinite(a0)):
        raise ValueError("initial state must be a finite vector of the system dimension")
    if np.isscalar(t_span):
        t_span = (0.0, float(t_span))
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")

    def blowup(t, x):
        return cap - np.max(np.abs(x))

    blowup.terminal = True
    blowup.direction = -1
    with np.errstate(over="ignore", invalid="ignore"):
        extra = {"jac": lambda t, x: cf.jacobian(x)} if method in ("LSODA", "BDF", "Radau") else {}
        sol = solve_ivp(lambda t, x: cf(x), (t0, t1), a0, method=method, rtol=rtol, atol=atol,
                        dense_output=True, events=blowup, max_step=max_step, **extra)
    if sol.status == -1:
        raise IntegrationError(f"integration failed at t = {sol.t[-1]:.17g}: {sol.message}")
    diverged = sol.status == 1
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError(f"non-finite state near t = {sol.t[-1]:.17g}")
    return Trajectory(sol.t.copy(), sol.y.T.copy(), sol.sol, diverged)


def time_average(phi: Polynomial, traj: Trajectory, t_start: float | None = None,
                 t_end: float | None = None) -> float:
    """Per-step Simpson quadrature of phi along the dense trajectory, over elapsed time."""
    if len(traj) < 2:
        raise ValueError("trajectory has fewer than two samples")
    if traj.diverged:
        raise ValueError("trajectory diverged; its time average is undefined")
    t = traj.times
    lo = t[0] if t_start is None else t_start
    hi = t[-1] if t_end is None else t_end
    if not hi > lo:
        raise ValueError("empty averaging window")
    knots = np.concatenate([[lo], t[(t > lo) & (t < hi)], [hi]])
    pm = PolyMap([phi])
    a, b = knots[:-1], knots[1:]
    mid = 0.5 * (a + b)
    if traj.dense is None:
        raise ValueError("trajectory has no dense output")
    fa = pm(traj(a))[:, 0]
    fm = pm(traj(mid))[:, 0]
    fb = pm(traj(b))[:, 0]
    total = np.sum((b - a) * (fa + 4.0 * fm + fb)) / 6.0
    return float(total / (hi - lo))
