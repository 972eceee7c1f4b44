"""Block-diagonal SDPs in standard primal form.

    minimize    <C, X> + c_free . x_free
    subject to  <A_i, X> + (B x_free)_i = b_i,   i = 1..m
                X = diag(X_1, ..., X_p) PSD,  x_free unrestricted

Positive block sizes are dense PSD blocks, negative sizes are diagonal
(nonnegative vector) blocks, as in SDPA. Symmetric coefficient matrices are
stored by their upper-triangle entries; an off-diagonal entry ``v`` at
``(i, j)`` stands for both ``(i, j)`` and ``(j, i)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class SdpStatus(str, enum.Enum):
    SOLVED = "Solved"
    INFEASIBLE = "Infeasible"
    STALLED = "Stalled"
    INACCURATE = "Inaccurate"


class SdpFormatError(ValueError):
    pass


class BlockLayout:
    """Maps (block, i, j) with i <= j to a flat coordinate index."""

    def __init__(self, blocks):
        self.blocks = tuple(int(s) for s in blocks)
        if not self.blocks or any(s == 0 for s in self.blocks):
            raise ValueError("block sizes must be nonzero")
        self.offsets = []
        off = 0
        for s in self.blocks:
            self.offsets.append(off)
            off += s * (s + 1) // 2 if s > 0 else -s
        self.size = off

    def index(self, blk: int, i: int, j: int) -> int:
        s = self.blocks[blk]
        if i > j:
            i, j = j, i
        if s > 0:
            if not 0 <= i <= j < s:
                raise IndexError(f"entry ({i},{j}) outside block {blk} of size {s}")
            # row-major upper triangle
            return self.offsets[blk] + i * s - i * (i - 1) // 2 + (j - i)
        if i != j or not 0 <= i < -s:
            raise IndexError(f"diagonal block {blk} has no entry ({i},{j})")
        return self.offsets[blk] + i

    def entries(self, blk: int):
        """(flat index array, row array, col array) for a block's coordinates."""
        s = self.blocks[blk]
        if s > 0:
            r, c = np.triu_indices(s)
            return self.offsets[blk] + np.arange(len(r)), r, c
        r = np.arange(-s)
        return self.offsets[blk] + r, r, r

    def unpack(self, vec) -> list[np.ndarray]:
        """Flat coordinate vector -> list of full symmetric blocks (diagonal blocks as 1-D)."""
        vec = np.asarray(vec, dtype=float)
        out = []
        for k, s in enumerate(self.blocks):
            idx, r, c = self.entries(k)
            if s > 0:
                M = np.zeros((s, s))
                M[r, c] = vec[idx]
                M[c, r] = vec[idx]
                out.append(M)
            else:
                out.append(vec[idx].copy())
        return out

    def pack(self, mats) -> np.ndarray:
        """Full blocks -> flat upper-triangle coordinates (values, not weights)."""
        vec = np.zeros(self.size)
        for k, M in enumerate(mats):
            idx, r, c = self.entries(k)
            M = np.asarray(M, dtype=float)
            vec[idx] = M[r, c] if self.blocks[k] > 0 else M
        return vec

    def weights(self) -> np.ndarray:
        """Inner-product weights: 2 on off-diagonal coordinates, 1 on diagonals."""
        w = np.ones(self.size)
        for k, s in enumerate(self.blocks):
            if s > 0:
                idx, r, c = self.entries(k)
                w[idx[r != c]] = 2.0
        return w


@dataclass
class SdpProblem:
    blocks: tuple
    A: sp.csr_matrix  # (m, ncoord) upper-triangle coefficients
    b: np.ndarray
    C: np.ndarray  # (ncoord,)
    B: sp.csr_matrix | None = None  # (m, nfree)
    c_free: np.ndarray | None = None
    layout: BlockLayout = field(init=False, repr=False)

    def __post_init__(self):
        self.blocks = tuple(int(s) for s in self.blocks)
        self.layout = BlockLayout(self.blocks)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.C = np.asarray(self.C, dtype=float).ravel()
        m = self.A.shape[0]
        if m < 1:
            raise ValueError("an SDP needs at least one constraint")
        if self.A.shape[1] != self.layout.size or self.C.shape[0] != self.layout.size:
            raise ValueError("coefficient arrays do not match the block structure")
        if self.b.shape[0] != m:
            raise ValueError("right-hand side length differs from constraint count")
        if self.B is None:
            self.B = sp.csr_matrix((m, 0))
            self.c_free = np.zeros(0)
        self.B = sp.csr_matrix(self.B, dtype=float)
        self.c_free = np.asarray(self.c_free, dtype=float).ravel()
        if self.B.shape[0] != m or self.B.shape[1] != self.c_free.shape[0]:
            raise ValueError("free-variable data has inconsistent shape")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n_free(self) -> int:
        return self.B.shape[1]

    @classmethod
    def from_entries(cls, blocks, constraints, objective, free=None, c_free=None):
        """Build from entry lists.

        ``constraints`` is a list of ``(entries, rhs)`` where ``entries`` holds
        ``(blk, i, j, value)`` tuples (0-based, any triangle). ``free`` is an
        optional list (one per constraint) of ``{free_index: coefficient}``.
        """
        layout = BlockLayout(blocks)
        rows, cols, vals = [], [], []
        b = []
        for r, (entries, rhs) in enumerate(constraints):
            for blk, i, j, v in entries:
                rows.append(r)
                cols.append(layout.index(blk, i, j))
                vals.append(v)
            b.append(rhs)
        if not b:
            raise ValueError("an SDP needs at least one constraint")
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(b), layout.size))
        C = np.zeros(layout.size)
        for blk, i, j, v in objective:
            C[layout.index(blk, i, j)] += v
        B = None
        if free is not None:
            nf = len(c_free)
            fr, fc, fv = [], [], []
            for r, row in enumerate(free):
                for k, v in row.items():
                    fr.append(r)
                    fc.append(k)
                    fv.append(v)
            B = sp.csr_matrix((fv, (fr, fc)), shape=(len(b), nf))
        return cls(tuple(blocks), A, np.array(b, float), C, B, c_free)

    # -- evaluation helpers ---------------------------------------------------
    def inner(self, coef_vec, x_vec) -> np.ndarray | float:
        return coef_vec @ (self.layout.weights() * x_vec)

    def apply_A(self, x_vec, x_free=None) -> np.ndarray:
        out = self.A @ (self.layout.weights() * x_vec)
        if x_free is not None and self.n_free:
            out = out + self.B @ x_free
        return out

    def apply_At(self, y) -> np.ndarray:
        """Adjoint of the PSD part, as flat upper-triangle coordinates."""
        return self.A.T @ y


@dataclass
class SdpSolution:
    primal_blocks: list
    free: np.ndarray
    dual_vector: np.ndarray
    dual_blocks: list
    primal_obj: float
    dual_obj: float
    residuals: dict
    status: SdpStatus
    iterations: int = 0
    message: str = ""

    @property
    def solved(self) -> bool:
        return self.status == SdpStatus.SOLVED


SOLVED_TOL = 1e-7


def _min_eig(M) -> float:
    M = np.asarray(M)
    if M.ndim == 1:
        return float(M.min()) if M.size else 0.0
    return float(np.linalg.eigvalsh(M)[0])


def evaluate_solution(p: SdpProblem, X_blocks, x_free, y, Z_blocks) -> dict:
    """Residuals of a candidate primal-dual pair, recomputed from problem data."""
    lay = p.layout
    xv = lay.pack(X_blocks)
    zv = lay.pack(Z_blocks)
    x_free = np.zeros(p.n_free) if x_free is None else np.asarray(x_free, float)
    y = np.asarray(y, float)
    w = lay.weights()
    rp = p.b - p.apply_A(xv, x_free)
    rd = p.C - p.apply_At(y) - zv
    rf = p.c_free - p.B.T @ y if p.n_free else np.zeros(0)
    normb = np.linalg.norm(p.b)
    normc = np.sqrt(p.C @ (w * p.C) + p.c_free @ p.c_free)
    pobj = float(p.C @ (w * xv) + p.c_free @ x_free)
    dobj = float(p.b @ y)
    dual_inf = np.sqrt(rd @ (w * rd) + rf @ rf) / (1.0 + normc)
    min_eig_x, min_eig_z, rel_eig_x = np.inf, np.inf, np.inf
    for k, s in enumerate(p.blocks):
        ex = _min_eig(X_blocks[k])
        ez = _min_eig(Z_blocks[k])
        nx = max(np.linalg.norm(X_blocks[k]), 1e-300)
        min_eig_x = min(min_eig_x, ex)
        min_eig_z = min(min_eig_z, ez)
        rel_eig_x = min(rel_eig_x, ex / nx)
    return {
        "primal_infeas": float(np.linalg.norm(rp) / (1.0 + normb)),
        "dual_infeas": float(dual_inf),
        "gap": float(abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))),
        "primal_obj": pobj,
        "dual_obj": dobj,
        "min_eig_X": float(min_eig_x),
        "min_eig_Z": float(min_eig_z),
        "min_rel_eig_X": float(rel_eig_x),
    }


def status_from_residuals(res: dict, tol: float = SOLVED_TOL) -> SdpStatus:
    ok = (
        res["primal_infeas"] <= tol
        and res["dual_infeas"] <= tol
        and res["gap"] <= tol
        and res["min_rel_eig_X"] >= -1e-8
    )
    return SdpStatus.SOLVED if ok else SdpStatus.INACCURATE
