"""Continuation of controlled orbits down to k = 0, and stability diagnostics.

The branch is followed by naive re-solving: the orbit converged at one k is
the initial guess at the next. Failed steps are bisected.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .varorbit import (COST_TOL, PeriodicOrbit, converge, load_orbit, resample, save_orbit,
                       shooting_error)

log = logging.getLogger(__name__)


@dataclass
class KSchedule:
    values: list
    adaptive: bool = True
    min_step_ratio: float = 2.0**-8

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        if not self.values or self.values[-1] != 0.0:
            raise ValueError("a k schedule must end at 0")
        if any(b >= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("k schedule must be strictly decreasing")
        if self.values[0] < 0:
            raise ValueError("k must be nonnegative")

    @classmethod
    def halving(cls, k: float, levels: int = 6, **kw) -> "KSchedule":
        """k, k/2, ..., k/2^levels, then 0."""
        if k == 0:
            return cls([0.0], **kw)
        return cls([k / 2.0**i for i in range(levels + 1)] + [0.0], **kw)


@dataclass
class Branch:
    orbits: list = field(default_factory=list)
    complete: bool = False
    message: str = ""
    failures: list = field(default_factory=list)  # (k_from, k_to, message)

    @property
    def final(self) -> PeriodicOrbit:
        return self.orbits[-1]

    @property
    def ks(self) -> list:
        return [o.k for o in self.orbits]


def continue_orbit(orbit: PeriodicOrbit, cf_family, sched: KSchedule, cost_tol: float = COST_TOL,
                   max_iter: int = 500) -> Branch:
    """Follow ``orbit`` along the schedule; ``cf_family`` is any field with ``with_k``."""
    if not orbit.converged:
        raise ValueError("continuation needs a converged starting orbit")
    if not np.isclose(orbit.k, sched.values[0], rtol=1e-12, atol=1e-15):
        raise ValueError(f"orbit has k = {orbit.k}, schedule starts at {sched.values[0]}")
    branch = Branch()
    first = converge(orbit, cf_family.with_k(sched.values[0]), cost_tol=cost_tol, max_iter=max_iter)
    if not first.converged:
        branch.orbits.append(orbit)
        branch.message = f"could not re-verify the starting orbit: {first.message}"
        return branch
    branch.orbits.append(first)
    current = first
    for target in sched.values[1:]:
        step_from = current.k
        full = step_from - target
        k_try = target
        while True:
            cand = converge(current, cf_family.with_k(k_try), cost_tol=cost_tol, max_iter=max_iter)
            if cand.converged:
                branch.orbits.append(cand)
                current = cand
                log.info("k = %.6g: T = %.8g, cost %.3g", k_try, cand.T, cand.final_cost)
                if k_try == target:
                    break
                step_from = k_try
                k_try = target
                continue
            branch.failures.append((current.k, k_try, cand.message))
            if not sched.adaptive:
                branch.message = f"failed at k = {k_try:.6g}: {cand.message}"
                return branch
            k_try = 0.5 * (current.k + k_try)
            if (current.k - k_try) / full < sched.min_step_ratio:
                branch.message = (f"bisection exhausted between k = {current.k:.6g} and {target:.6g}; "
                                  f"last failure: {cand.message}")
                return branch
    branch.complete = True
    branch.message = "reached k = 0"
    return branch


RETURN_TOL = 1e-4


def refine_endpoint(orbit: PeriodicOrbit, cf, tol: float = RETURN_TOL, N_max: int = 8192,
                    cost_tol: float = COST_TOL):
    """Double N until the shooting error under ``cf`` is at most ``tol``.

    The midpoint discretisation leaves an O((T/N)^2) defect that the orbit's
    instability amplifies over one period, so a loop that is converged on a
    coarse grid can still return poorly. Returns ``(orbit, [(N, error), ...])``;
    the orbit is the finest one that converged.
    """
    errors = [(orbit.N, shooting_error(orbit, cf))]
    best = orbit
    N = orbit.N
    while errors[-1][1] > tol and 2 * N <= N_max:
        N *= 2
        cand = converge(resample(best, N), cf, cost_tol=cost_tol)
        if not cand.converged:
            log.info("refinement to N = %d failed: %s", N, cand.message)
            break
        best = cand
        errors.append((N, shooting_error(best, cf)))
    return best, errors


def hausdorff(P, Q) -> float:
    """Symmetric Hausdorff distance between two point sets."""
    from scipy.spatial.distance import directed_hausdorff

    return float(max(directed_hausdorff(P, Q)[0], directed_hausdorff(Q, P)[0]))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------
def orbit_filename(k: float) -> str:
    return f"k_{k:.10f}.orbit"


def save_branch(branch: Branch, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = ["k,T,cost,converged"]
    for o in branch.orbits:
        save_orbit(o, d / orbit_filename(o.k))
        rows.append(f"{o.k:.17g},{o.T:.17g},{o.final_cost:.17g},{int(o.converged)}")
    (d / "manifest.csv").write_text("\n".join(rows) + "\n")


def load_branch(directory) -> Branch:
    d = Path(directory)
    manifest = d / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no branch manifest in {d}")
    orbits = []
    for line in manifest.read_text().splitlines()[1:]:
        if line.strip():
            k = float(line.split(",")[0])
            orbits.append(load_orbit(d / orbit_filename(k)))
    complete = bool(orbits) and orbits[-1].k == 0.0 and orbits[-1].converged
    return Branch(orbits, complete, "loaded")


# ---------------------------------------------------------------------------
# stability diagnostics
# ---------------------------------------------------------------------------
@dataclass
class StabilityReport:
    k0_estimate: float
    transversality_max: float
    samples: int
    skipped: int = 0


def tube_samples(orbit, count: int, rng: np.random.Generator, radius=None) -> np.ndarray:
    """Gaussian perturbations of random orbit points.

    ``radius`` may be a number or a ``(lo, hi)`` pair, in which case every
    sample draws its own radius log-uniformly from the range. The default
    spans 1e-3 to 0.3 times the orbit's size.
    """
    P = np.asarray(orbit.points if hasattr(orbit, "points") else orbit, dtype=float)
    size = float(np.max(np.ptp(P, axis=0))) or 1.0
    if radius is None:
        radius = (1e-3 * size, 0.3 * size)
    idx = rng.integers(0, len(P), count)
    if np.ndim(radius) == 0:
        r = np.full(count, float(radius))
    else:
        lo, hi = radius
        r = np.exp(rng.uniform(np.log(lo), np.log(hi), count))
    return P[idx] + r[:, None] * rng.standard_normal((count, P.shape[1]))


def estimate_k0(gap, system, orbit, gamma: float, samples: int = 10_000, rng=None,
                radius=None, min_retained: int = 100) -> float:
    """max |f.grad D| / min |grad D|^2 over tube samples with gamma/2 <= D <= gamma."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    X = tube_samples(orbit, samples, rng, radius)
    D = gap.value(X)
    keep = (D >= 0.5 * gamma) & (D <= gamma)
    if keep.sum() < min_retained:
        raise ValueError(f"only {int(keep.sum())} of {samples} samples have {gamma / 2:.3g} <= D <= "
                         f"{gamma:.3g}; use a larger gamma or a different tube radius")
    X = X[keep]
    F = system.field_map()(X)
    G = gap.grad(X)
    num = np.abs(np.einsum("ij,ij->i", F, G)).max()
    den = np.einsum("ij,ij->i", G, G).min()
    if den == 0.0:
        return np.inf
    return float(num / den)


def check_transversality(gap, system, samples, floor: float = 1e-10) -> StabilityReport:
    """Largest |f.grad D| / (|f| |grad D|) over admissible samples."""
    X = np.asarray(samples, dtype=float).reshape(-1, system.n)
    F = system.field_map()(X)
    G = gap.grad(X)
    nf = np.linalg.norm(F, axis=1)
    ng = np.linalg.norm(G, axis=1)
    ok = (nf >= floor) & (ng >= floor)
    if not ok.any():
        raise ValueError("every sample has a vanishing field or gradient")
    ratio = np.abs(np.einsum("ij,ij->i", F[ok], G[ok])) / (nf[ok] * ng[ok])
    return StabilityReport(np.nan, float(min(ratio.max(), 1.0)), int(ok.sum()), int((~ok).sum()))
