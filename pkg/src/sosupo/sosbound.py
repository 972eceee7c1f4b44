"""Sum-of-squares relaxation of the auxiliary-function bound problem.

Find the smallest ``U`` and a polynomial ``V`` such that

    D(a) = U - Phi(a) - f(a) . grad V(a)

is a sum of squares, ``D = z(a)^T Q z(a)`` with ``Q`` PSD. The SDP decision
variables are ``U`` and the coefficients of ``V`` (free) and the Gram matrix
``Q`` (one PSD block); each monomial of ``D`` contributes one linear equality.

Optionally the problem is posed in rescaled coordinates ``a = s * b`` which
keeps high-degree monomials well conditioned; results are mapped back.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .polyalg import Polynomial, grlex_key, lie_derivative, monomial_basis
from .sdp import SdpProblem, SdpSolution, SdpStatus
from .systems import DynamicalSystem

TOL_PSD = 1e-7
TOL_MATCH = 1e-6
TOL_NONNEG = 1e-6
DEFAULT_BASIS_CAP = 400


class CertificateStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    NEAR_OPTIMAL = "NearOptimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_TROUBLE = "NumericalTrouble"


class RelaxationError(ValueError):
    pass


def gap_degree(system: DynamicalSystem, observable: Polynomial, degV: int) -> int:
    d = max(observable.degree, degV - 1 + system.degree)
    return d + (d % 2)


@dataclass
class RelaxationSpec:
    system: DynamicalSystem
    observable: Polynomial
    degV: int
    basis_V: list | None = None
    basis_sigma: list | None = None
    scale: tuple | None = None
    basis_cap: int = DEFAULT_BASIS_CAP

    def __post_init__(self):
        n = self.system.n
        if self.observable.n != n:
            raise RelaxationError("observable and system dimensions differ")
        if self.degV < 2 or self.degV % 2:
            raise RelaxationError(f"degV must be an even positive integer, got {self.degV}")
        if self.degV < self.observable.degree:
            raise RelaxationError(
                f"degV = {self.degV} is below the observable degree {self.observable.degree}"
            )
        self.scale = tuple(float(v) for v in (self.scale or (1.0,) * n))
        if len(self.scale) != n or min(self.scale) <= 0:
            raise RelaxationError("scale must hold n positive factors")
        if self.basis_V is None:
            self.basis_V = monomial_basis(n, self.degV, mindeg=1)
        else:
            self.basis_V = sorted((tuple(e) for e in self.basis_V), key=grlex_key)
            if any(sum(e) == 0 for e in self.basis_V):
                raise RelaxationError("the constant monomial is not allowed in V's basis")
        half = gap_degree(self.system, self.observable, self.degV) // 2
        if self.basis_sigma is None:
            self.basis_sigma = monomial_basis(n, half)
        else:
            self.basis_sigma = sorted((tuple(e) for e in self.basis_sigma), key=grlex_key)
        if len(self.basis_sigma) > self.basis_cap:
            raise RelaxationError(
                f"Gram basis has {len(self.basis_sigma)} monomials (cap {self.basis_cap}); "
                "export the SDP in SDPA format for an external solver or prune the basis"
            )

    @property
    def half_degree(self) -> int:
        return gap_degree(self.system, self.observable, self.degV) // 2

    def scaled_problem(self):
        """Vector field and observable in the coordinates b = a / scale."""
        s = self.scale
        f = [fi.substitute_scale(s).scale(1.0 / si) for fi, si in zip(self.system.f, s)]
        return f, self.observable.substitute_scale(s)


@dataclass
class DecodingMap:
    """Where each quantity lives in the SDP: free index 0 is U, 1.. are V coefficients."""

    basis_V: list
    basis_sigma: list
    monomials: list  # constraint row -> monomial of D
    scale: tuple
    gram_block: int = 0


def build_relaxation(spec: RelaxationSpec) -> tuple[SdpProblem, DecodingMap]:
    n = spec.system.n
    f_s, phi_s = spec.scaled_problem()
    z = spec.basis_sigma
    lie_cols = [lie_derivative(Polynomial(n, {e: 1.0}), f_s) for e in spec.basis_V]

    rows: dict[tuple, int] = {}

    def row(e):
        return rows.setdefault(e, len(rows))

    gram_entries = []  # (row, i, j)
    for i in range(len(z)):
        for j in range(i, len(z)):
            e = tuple(a + b for a, b in zip(z[i], z[j]))
            gram_entries.append((e, i, j))
    zero = (0,) * n
    for e in [zero, *phi_s.terms, *(m for L in lie_cols for m in L.terms), *(g[0] for g in gram_entries)]:
        rows.setdefault(e, len(rows))
    monos = sorted(rows, key=grlex_key)
    rows = {e: r for r, e in enumerate(monos)}
    m = len(monos)

    from .sdp import BlockLayout

    lay = BlockLayout([len(z)])
    A = sp.csr_matrix(
        (np.ones(len(gram_entries)), ([rows[e] for e, _, _ in gram_entries],
                                      [lay.index(0, i, j) for _, i, j in gram_entries])),
        shape=(m, lay.size),
    )
    fr, fc, fv = [rows[zero]], [0], [-1.0]
    for k, L in enumerate(lie_cols, start=1):
        for e, c in L.terms.items():
            fr.append(rows[e])
            fc.append(k)
            fv.append(c)
    B = sp.csr_matrix((fv, (fr, fc)), shape=(m, 1 + len(lie_cols)))
    b = np.zeros(m)
    for e, c in phi_s.terms.items():
        b[rows[e]] = -c
    c_free = np.zeros(1 + len(lie_cols))
    c_free[0] = 1.0
    problem = SdpProblem((len(z),), A, b, np.zeros(lay.size), B, c_free)
    return problem, DecodingMap(list(spec.basis_V), list(z), monos, spec.scale)


def prune_basis(spec: RelaxationSpec, tol: float = 1e-9, max_rounds: int = 20) -> list:
    """Gram basis reduced to monomials that can appear in some SOS witness.

    A monomial z_a may only carry weight if 2a lies in the Newton polytope of
    D. The support of D is not the formal support: coefficients no Gram pair
    can produce must vanish, which constrains V and can force further
    coefficients of D to zero. The two steps are alternated until the basis
    stops shrinking. The optimal value is unchanged; the SDP loses the
    directions along which it has no interior.
    """
    from scipy.linalg import lstsq, null_space
    from scipy.optimize import linprog

    basis = list(spec.basis_sigma)
    for _ in range(max_rounds):
        trial = RelaxationSpec(spec.system, spec.observable, spec.degV, spec.basis_V, basis,
                               spec.scale, spec.basis_cap)
        problem, dec = build_relaxation(trial)
        B, b = problem.B.toarray(), problem.b
        forced = np.diff(problem.A.tocsr().indptr) == 0
        if forced.any():
            x0 = lstsq(B[forced], b[forced])[0]
            N = null_space(B[forced], rcond=1e-10)
        else:
            x0, N = np.zeros(B.shape[1]), np.eye(B.shape[1])
        ref = 1.0 + np.abs(B).max(axis=1, initial=0.0) + np.abs(b)
        live = (np.abs(b - B @ x0) > tol * ref) | (np.abs(B @ N).max(axis=1, initial=0.0) > tol * ref)
        S = np.array([e for e, keep in zip(dec.monomials, live) if keep], dtype=float)
        if not len(S):
            return basis[:1]
        A_eq = np.vstack([S.T, np.ones(len(S))])
        kept = [a for a in basis
                if linprog(np.zeros(len(S)), A_eq=A_eq, b_eq=np.r_[2.0 * np.array(a), 1.0],
                           bounds=(0, None), method="highs").status == 0]
        if len(kept) == len(basis):
            break
        basis = kept
    return basis


@dataclass
class Certificate:
    V: Polynomial
    U: float
    gram: np.ndarray
    basis: list
    degV: int
    scale: tuple
    residuals: dict = field(default_factory=dict)
    status: CertificateStatus = CertificateStatus.OPTIMAL

    @property
    def ok(self) -> bool:
        return self.status in (CertificateStatus.OPTIMAL, CertificateStatus.NEAR_OPTIMAL)


def _unscale_V(coeffs, basis, scale):
    """V written in b = a/s back in a: coefficient of a^e is v_e / s^e."""
    n = len(scale)
    return Polynomial(
        n, {e: c / float(np.prod([s**k for s, k in zip(scale, e)])) for e, c in zip(basis, coeffs)}
    )


def gram_polynomial(gram: np.ndarray, basis) -> Polynomial:
    n = len(basis[0])
    terms = []
    for i in range(len(basis)):
        for j in range(len(basis)):
            if gram[i, j] != 0.0:
                terms.append((tuple(a + b for a, b in zip(basis[i], basis[j])), gram[i, j]))
    return Polynomial(n, terms)


def scaled_gap(cert: Certificate, system: DynamicalSystem, observable: Polynomial) -> Polynomial:
    """D in the certificate's scaled coordinates, recomputed symbolically."""
    D = cert.U - observable - lie_derivative(cert.V, system.f)
    return D.substitute_scale(cert.scale)


def extract_certificate(problem: SdpProblem, decoding: DecodingMap, solution: SdpSolution,
                        spec: RelaxationSpec) -> Certificate:
    if solution.status == SdpStatus.INFEASIBLE:
        n = spec.system.n
        return Certificate(Polynomial.zero(n), np.inf, np.zeros((0, 0)), decoding.basis_sigma,
                           spec.degV, decoding.scale, {}, CertificateStatus.INFEASIBLE)
    U = float(solution.free[0])
    V = _unscale_V(solution.free[1:], decoding.basis_V, decoding.scale)
    Q = np.asarray(solution.primal_blocks[decoding.gram_block])
    cert = Certificate(V, U, Q, decoding.basis_sigma, spec.degV, decoding.scale)
    Ds = scaled_gap(cert, spec.system, spec.observable)
    G = gram_polynomial(Q, decoding.basis_sigma)
    diff = Ds - G
    mism = diff.max_abs_coeff()
    lam = np.linalg.eigvalsh(Q) if Q.size else np.zeros(1)
    cert.residuals = {
        "min_gram_eigenvalue": float(lam[0]),
        "max_gram_eigenvalue": float(lam[-1]),
        "max_coeff_mismatch": float(mism),
        "sdp_primal_infeas": solution.residuals.get("primal_infeas", np.nan),
        "sdp_dual_infeas": solution.residuals.get("dual_infeas", np.nan),
        "sdp_gap": solution.residuals.get("gap", np.nan),
        "dual_obj": float(solution.dual_obj),
    }
    if lam[0] < -TOL_PSD or mism > TOL_MATCH:
        cert.status = CertificateStatus.NUMERICAL_TROUBLE
    elif solution.status == SdpStatus.SOLVED:
        cert.status = CertificateStatus.OPTIMAL
    else:
        cert.status = CertificateStatus.NEAR_OPTIMAL
    return cert


def solve_bound(spec: RelaxationSpec, solver_options=None) -> Certificate:
    from .sdp import solve

    problem, decoding = build_relaxation(spec)
    sol = solve(problem, solver_options)
    return extract_certificate(problem, decoding, sol, spec)


def verify_certificate(cert: Certificate, spec: RelaxationSpec, samples) -> dict:
    """Evaluate D at sample points and summarise the Gram spectrum."""
    from .polyalg import PolyMap

    D = cert.U - spec.observable - lie_derivative(cert.V, spec.system.f)
    samples = np.asarray(samples, dtype=float).reshape(-1, spec.system.n)
    if samples.shape[0]:
        vals = PolyMap([D])(samples)[:, 0]
        min_d = float(vals.min())
        argmin = samples[int(vals.argmin())]
        below = int(np.sum(vals < -TOL_NONNEG))
    else:
        min_d, argmin, below = np.inf, None, 0
    lam = np.linalg.eigvalsh(cert.gram) if cert.gram.size else np.zeros(0)
    return {
        "samples": int(samples.shape[0]),
        "min_D": min_d,
        "argmin": argmin,
        "count_negative": below,
        "valid": below == 0 and (lam.size == 0 or lam[0] >= -TOL_PSD),
        "gram_min_eig": float(lam[0]) if lam.size else np.nan,
        "gram_max_eig": float(lam[-1]) if lam.size else np.nan,
        "gram_negative_eigs": int(np.sum(lam < -TOL_PSD)),
    }


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------
def dump_certificate(cert: Certificate) -> str:
    n = cert.V.n
    out = [
        "# sosupo certificate",
        f"n={n}",
        f"degV={cert.degV}",
        f"U={cert.U:.17g}",
        f"status={cert.status.value}",
        "scale=" + " ".join(f"{s:.17g}" for s in cert.scale),
    ]
    for k, v in cert.residuals.items():
        out.append(f"residual.{k}={v:.17g}")
    out.append("V:")
    out.extend(cert.V.to_lines())
    out.append(f"basis: {len(cert.basis)}")
    out.extend(" ".join(str(e) for e in mono) for mono in cert.basis)
    out.append(f"gram: {cert.gram.shape[0]}")
    for i in range(cert.gram.shape[0]):
        out.append(" ".join(f"{v:.17g}" for v in cert.gram[i, : i + 1]))
    return "\n".join(out) + "\n"


def parse_certificate(text: str) -> Certificate:
    lines = text.splitlines()
    kv, residuals = {}, {}
    i = 0
    while i < len(lines) and lines[i].strip() != "V:":
        ln = lines[i].strip()
        i += 1
        if not ln or ln.startswith("#"):
            continue
        key, _, val = ln.partition("=")
        if key.startswith("residual."):
            residuals[key[len("residual."):]] = float(val)
        else:
            kv[key] = val
    if i >= len(lines):
        raise ValueError("certificate file has no 'V:' section")
    n = int(kv["n"])
    i += 1
    vlines = []
    while not lines[i].startswith("basis:"):
        vlines.append(lines[i])
        i += 1
    V = Polynomial.from_lines(n, vlines)
    nb = int(lines[i].split(":")[1])
    basis = [tuple(int(t) for t in lines[i + 1 + k].split()) for k in range(nb)]
    i += 1 + nb
    ng = int(lines[i].split(":")[1])
    G = np.zeros((ng, ng))
    for r in range(ng):
        vals = [float(t) for t in lines[i + 1 + r].split()]
        G[r, : r + 1] = vals
        G[: r + 1, r] = vals
    return Certificate(
        V, float(kv["U"]), G, basis, int(kv["degV"]),
        tuple(float(t) for t in kv["scale"].split()), residuals, CertificateStatus(kv["status"]),
    )


def save_certificate(cert: Certificate, path) -> None:
    Path(path).write_text(dump_certificate(cert))


def load_certificate(path) -> Certificate:
    return parse_certificate(Path(path).read_text())
