"""The gap polynomial D = U - f.grad V - Phi and multistart minimization of it.

Points where D is small lie near the orbits that (nearly) saturate the bound,
so a cloud of local minimizers of D is the cheapest available localisation
of the extremal orbit.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from .polyalg import DimensionError, PolyMap, Polynomial, lie_derivative
from .sosbound import CertificateStatus

log = logging.getLogger(__name__)

DEDUP_RADIUS = 1e-6


@dataclass(frozen=True, eq=False)
class GapPolynomial:
    D: Polynomial
    gradD: tuple
    source: object = None

    def __post_init__(self):
        object.__setattr__(self, "gradD", tuple(self.gradD))
        if len(self.gradD) != self.D.n:
            raise DimensionError("gradient length differs from the dimension of D")

    @classmethod
    def from_polynomial(cls, D: Polynomial, source=None) -> "GapPolynomial":
        return cls(D, tuple(D.gradient()), source)

    @property
    def n(self) -> int:
        return self.D.n

    def _maps(self):
        maps = self.__dict__.get("_compiled")
        if maps is None:
            maps = (PolyMap([self.D]), PolyMap(self.gradD))
            object.__setattr__(self, "_compiled", maps)
        return maps

    def hessian_map(self) -> PolyMap:
        hm = self.__dict__.get("_hess")
        if hm is None:
            hm = PolyMap([g.derivative(j) for g in self.gradD for j in range(self.n)])
            object.__setattr__(self, "_hess", hm)
        return hm

    def value(self, x):
        """D at a point (scalar) or at rows of an ``(N, n)`` array."""
        out = self._maps()[0](x)
        return float(out[0]) if np.ndim(x) == 1 else out[:, 0]

    def grad(self, x) -> np.ndarray:
        return self._maps()[1](x)

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        H = self.hessian_map()(x)
        return H.reshape(x.shape[:-1] + (self.n, self.n))

    def __getstate__(self):
        return {"D": self.D, "gradD": self.gradD, "source": self.source}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)


def build_gap(cert, system, observable: Polynomial) -> GapPolynomial:
    """Expanded D = U - f.grad V - Phi for a certificate."""
    if cert.status == CertificateStatus.INFEASIBLE:
        raise ValueError("cannot form a gap polynomial from an infeasible certificate")
    n = system.n
    if cert.V.n != n or observable.n != n:
        raise DimensionError("certificate, system and observable dimensions differ")
    D = Polynomial.constant(n, cert.U) - lie_derivative(cert.V, system.f) - observable
    return GapPolynomial(D, tuple(D.gradient()), cert)


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------
@dataclass
class PointCloud:
    points: np.ndarray  # (M, n)
    values: np.ndarray  # D at each point
    gradnorms: np.ndarray
    epsilon: float
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        self.points = pts.reshape(len(self.values), pts.shape[-1] if pts.ndim == 2 else -1)
        self.gradnorms = np.asarray(self.gradnorms, dtype=float)
        order = np.lexsort((self.gradnorms, self.values))
        self.points, self.values, self.gradnorms = (
            self.points[order], self.values[order], self.gradnorms[order])

    def __len__(self) -> int:
        return len(self.values)

    def best(self):
        """Smallest D, ties broken by the smaller gradient norm."""
        if not len(self):
            raise ValueError("point cloud is empty")
        return self.points[0].copy()

    def to_csv(self, path) -> None:
        lines = [f"# eps={self.epsilon:.17g}"]
        for x, d, g in zip(self.points, self.values, self.gradnorms):
            lines.append(",".join(f"{v:.17g}" for v in (*x, d, g)))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "PointCloud":
        eps = None
        rows = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("eps="):
                    eps = float(body[4:])
                continue
            try:
                rows.append([float(t) for t in line.split(",")])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row") from None
        if eps is None:
            raise ValueError(f"{path}: missing '# eps=' header")
        if not rows:
            return cls(np.zeros((0, 1)), np.zeros(0), np.zeros(0), eps)
        arr = np.array(rows)
        return cls(arr[:, :-2], arr[:, -2], arr[:, -1], eps)


def _dedup(points, values, gradnorms, radius=DEDUP_RADIUS):
    order = np.lexsort((gradnorms, values))
    kept: list[int] = []
    for i in order:
        if all(np.linalg.norm(points[i] - points[j]) >= radius for j in kept):
            kept.append(i)
    kept = np.array(kept, dtype=int)
    return points[kept], values[kept], gradnorms[kept]


@dataclass
class _Outcome:
    x: np.ndarray
    value: float
    gradnorm: float
    history: list
    skipped: str | None = None


def _run_bfgs(g: GapPolynomial, x0, gtol: float, xtol: float, maxiter: int | None) -> _Outcome:
    x0 = np.asarray(x0, dtype=float)
    history: list[float] = []

    def fun(x):
        v = g.value(x)
        if not np.isfinite(v):
            raise FloatingPointError("non-finite D")
        return v

    def jac(x):
        d = g.grad(x)
        if not np.all(np.isfinite(d)):
            raise FloatingPointError("non-finite gradient")
        return d

    try:
        f0 = fun(x0)
        history.append(f0)
        if np.max(np.abs(jac(x0)), initial=0.0) <= gtol:
            return _Outcome(x0, f0, float(np.linalg.norm(jac(x0))), history)
        with np.errstate(over="raise", invalid="raise"):
            res = minimize(
                fun, x0, jac=jac, method="BFGS",
                callback=lambda xk: history.append(fun(xk)),
                options={"gtol": gtol, "norm": np.inf, "xrtol": xtol,
                         "maxiter": maxiter or 200 * g.n},
            )
    except (FloatingPointError, OverflowError) as exc:
        return _Outcome(x0, np.nan, np.nan, history, f"start {x0.tolist()}: {exc}")
    x = np.asarray(res.x, dtype=float)
    v = g.value(x)
    if not np.isfinite(v):
        return _Outcome(x0, np.nan, np.nan, history, f"start {x0.tolist()}: non-finite result")
    return _Outcome(x, v, float(np.linalg.norm(g.grad(x))), history)


def _run_chunk(args):
    g, starts, gtol, xtol, maxiter = args
    return [_run_bfgs(g, s, gtol, xtol, maxiter) for s in starts]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SOSUPO_WORKERS", "1")))
    except ValueError:
        return 1


def minimize_multistart(g: GapPolynomial, starts, eps: float, gtol: float = 1e-16,
                        xtol: float = 1e-16, maxiter: int | None = None,
                        workers: int | None = None, return_history: bool = False):
    """BFGS from every start; keep terminal points with D <= eps, deduplicated."""
    starts = np.asarray(starts, dtype=float).reshape(-1, g.n)
    if not len(starts):
        raise ValueError("no starting points given")
    workers = workers or default_workers()
    if workers > 1 and len(starts) > 1:
        chunks = np.array_split(starts, min(workers, len(starts)))
        with ProcessPoolExecutor(workers) as ex:
            outcomes = [o for part in ex.map(_run_chunk, [(g, c, gtol, xtol, maxiter) for c in chunks])
                        for o in part]
    else:
        outcomes = _run_chunk((g, starts, gtol, xtol, maxiter))
    skipped = [o.skipped for o in outcomes if o.skipped]
    for s in skipped:
        log.info("abandoned: %s", s)
    good = [o for o in outcomes if not o.skipped and o.value <= eps]
    if good:
        pts, vals, gns = _dedup(np.array([o.x for o in good]), np.array([o.value for o in good]),
                                np.array([o.gradnorm for o in good]))
    else:
        pts, vals, gns = np.zeros((0, g.n)), np.zeros(0), np.zeros(0)
    cloud = PointCloud(pts, vals, gns, eps, skipped)
    if return_history:
        return cloud, [o.history for o in outcomes]
    return cloud


# ---------------------------------------------------------------------------
# start sampling
# ---------------------------------------------------------------------------
def attractor_box(system, rng: np.random.Generator, t_final: float = 1e3, inflate: float = 0.25,
                  transient: float = 0.1, x0=None, attempts: int = 5):
    """Axis-aligned box of a long uncontrolled trajectory, inflated by ``inflate``.

    Up to ``attempts`` random initial conditions in ``[-1, 1]^n`` are tried
    (only ``x0`` when it is given). Returns ``(lo, hi, ok)``; ``ok`` is False
    when every trajectory diverged or collapsed onto an equilibrium, in which
    case the box is a fallback ``[-1, 1]^n`` cube around the origin.
    """
    n = system.n
    fm = system.field_map()
    tries = [np.asarray(x0, float)] if x0 is not None else [rng.uniform(-1.0, 1.0, n) for _ in range(attempts)]

    def blowup(t, x):
        return 1e6 - np.max(np.abs(x))

    blowup.terminal = True
    for start in tries:
        sol = solve_ivp(lambda t, x: fm(x), (0.0, t_final), start, rtol=1e-8, atol=1e-8,
                        events=blowup, dense_output=True)
        if sol.status != 0:
            continue
        X = sol.sol(np.linspace(transient * t_final, t_final, 20001)).T
        lo, hi = X.min(axis=0), X.max(axis=0)
        width = hi - lo
        if np.max(width) < 1e-3:
            continue
        pad = inflate * np.maximum(width, 1e-3 * np.max(width))
        return lo - pad, hi + pad, True
    return -np.ones(n), np.ones(n), False


def uniform_starts(lo, hi, count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return lo + (hi - lo) * rng.random((count, lo.size))
