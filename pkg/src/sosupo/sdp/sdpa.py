"""SDPA sparse format (.dat-s) export/import and CSDP-style solution files.

Our primal ``min <C,X> s.t. <A_i,X> = b_i`` is SDPA's dual problem, so the
file carries ``F_i = A_i``, ``c = b`` and ``F_0 = -C``. Free variables are
split as ``x = x+ - x-`` into a trailing diagonal block; a ``*sosupo``
comment records the split so that our own importer can undo it.

Solution layout (as written by CSDP): first line the dual vector of the
solver's convention (``-y`` in ours), then ``1 blk i j v`` lines for the
dual slack ``Z`` and ``2 blk i j v`` lines for the primal ``X``.
"""
from __future__ import annotations

import re

import numpy as np
import scipy.sparse as sp

from .problem import (
    SdpFormatError,
    SdpProblem,
    SdpSolution,
    SdpStatus,
    evaluate_solution,
    status_from_residuals,
)

_SPLIT_TAG = "*sosupo free-split"


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _split_free(p: SdpProblem):
    """Standard-form copy with free variables moved into a diagonal block."""
    nf = p.n_free
    if not nf:
        return p.blocks, p.A.tocoo(), p.C
    blocks = p.blocks + (-2 * nf,)
    base = p.layout.size
    B = p.B.tocoo()
    A = p.A.tocoo()
    rows = np.concatenate([A.row, B.row, B.row])
    cols = np.concatenate([A.col, base + B.col, base + nf + B.col])
    vals = np.concatenate([A.data, B.data, -B.data])
    A2 = sp.coo_matrix((vals, (rows, cols)), shape=(p.m, base + 2 * nf))
    C2 = np.concatenate([p.C, p.c_free, -p.c_free])
    return blocks, A2, C2


def export_sdpa(p: SdpProblem) -> bytes:
    blocks, A, C = _split_free(p)
    from .problem import BlockLayout

    lay = BlockLayout(blocks)
    # coordinate -> (blk, i, j), 1-based
    coord = [None] * lay.size
    for k in range(len(blocks)):
        idx, r, c = lay.entries(k)
        for q, i, j in zip(idx, r, c):
            coord[q] = (k + 1, i + 1, j + 1)
    lines = []
    if p.n_free:
        lines.append(f"{_SPLIT_TAG} {p.n_free}")
    lines.append(str(p.m))
    lines.append(str(len(blocks)))
    lines.append(" ".join(str(s) for s in blocks))
    lines.append(" ".join(_fmt(v) for v in p.b))
    for q in np.flatnonzero(C):
        k, i, j = coord[q]
        lines.append(f"0 {k} {i} {j} {_fmt(-C[q])}")
    A = A.tocsr()
    A.sum_duplicates()
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        order = np.argsort(A.indices[lo:hi], kind="stable")
        for q, v in zip(A.indices[lo:hi][order], A.data[lo:hi][order]):
            if v == 0.0:
                continue
            k, i, j = coord[q]
            lines.append(f"{r + 1} {k} {i} {j} {_fmt(v)}")
    return ("\n".join(lines) + "\n").encode()


_SEP = re.compile(r"[,{}()\s]+")


def _numbers(line: str) -> list[str]:
    return [t for t in _SEP.split(line) if t]


def import_sdpa(data: bytes | str) -> SdpProblem:
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    nfree = 0
    header: list[tuple[int, list[str]]] = []
    body: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith(_SPLIT_TAG):
            nfree = int(line[len(_SPLIT_TAG):])
            continue
        if not line or line[0] in "\"*":
            continue
        toks = _numbers(line)
        if not toks:
            continue
        if len(header) < 3:
            header.append((lineno, toks))
        else:
            body.append((lineno, toks))
    names = ("constraint count", "block count", "block structure")
    if len(header) < 3:
        raise SdpFormatError(f"truncated SDPA file: missing {names[len(header)]}")
    try:
        m = int(header[0][1][0])
        nblocks = int(header[1][1][0])
        blocks = [int(float(t)) for t in header[2][1]]
    except ValueError as exc:
        raise SdpFormatError(f"line {header[0][0]}: bad header ({exc})") from None
    if len(blocks) != nblocks:
        raise SdpFormatError(f"line {header[2][0]}: expected {nblocks} block sizes, got {len(blocks)}")
    # rhs vector may span several lines
    rhs: list[float] = []
    while body and len(rhs) < m:
        lineno, toks = body.pop(0)
        try:
            rhs.extend(float(t) for t in toks)
        except ValueError:
            raise SdpFormatError(f"line {lineno}: bad right-hand side entry") from None
    if len(rhs) != m:
        raise SdpFormatError(f"truncated SDPA file: right-hand side has {len(rhs)} of {m} entries")
    from .problem import BlockLayout

    lay = BlockLayout(blocks)
    C = np.zeros(lay.size)
    rows, cols, vals = [], [], []
    for lineno, toks in body:
        if len(toks) != 5:
            raise SdpFormatError(f"line {lineno}: expected 'matno blkno i j value'")
        try:
            mat, blk, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
        except ValueError:
            raise SdpFormatError(f"line {lineno}: malformed entry") from None
        if not 0 <= mat <= m or not 1 <= blk <= nblocks:
            raise SdpFormatError(f"line {lineno}: matrix/block number out of range")
        try:
            q = lay.index(blk - 1, i - 1, j - 1)
        except IndexError as exc:
            raise SdpFormatError(f"line {lineno}: {exc}") from None
        if mat == 0:
            C[q] -= v
        else:
            rows.append(mat - 1)
            cols.append(q)
            vals.append(v)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, lay.size))
    b = np.array(rhs)
    if not nfree:
        return SdpProblem(tuple(blocks), A, b, C)
    # undo the free-variable split (last block)
    if blocks[-1] != -2 * nfree:
        raise SdpFormatError("free-split tag does not match the last block")
    base = lay.offsets[-1]
    Bp = A[:, base:base + nfree]
    return SdpProblem(tuple(blocks[:-1]), A[:, :base], b, C[:base], Bp.tocsr(), C[base:base + nfree])


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------
def _std_blocks(p: SdpProblem, X_blocks, x_free):
    if not p.n_free:
        return list(X_blocks)
    xf = np.asarray(x_free, float)
    return list(X_blocks) + [np.concatenate([np.maximum(xf, 0), np.maximum(-xf, 0)])]


def export_solution(p: SdpProblem, sol: SdpSolution) -> bytes:
    blocks, _, _ = _split_free(p)
    Xs = _std_blocks(p, sol.primal_blocks, sol.free)
    Zs = list(sol.dual_blocks)
    if p.n_free:
        Zs.append(np.zeros(2 * p.n_free))
    lines = [" ".join(_fmt(-v) for v in sol.dual_vector)]
    for matno, mats in ((1, Zs), (2, Xs)):
        for k, (s, M) in enumerate(zip(blocks, mats)):
            M = np.asarray(M)
            if s > 0:
                r, c = np.triu_indices(s)
                for i, j in zip(r, c):
                    # the leading entry is always written so that neither section is empty
                    if M[i, j] != 0.0 or (k == 0 and i == j == 0):
                        lines.append(f"{matno} {k + 1} {i + 1} {j + 1} {_fmt(M[i, j])}")
            else:
                for i in np.flatnonzero(M) if k else sorted({0, *np.flatnonzero(M)}):
                    lines.append(f"{matno} {k + 1} {i + 1} {i + 1} {_fmt(M[i])}")
    return ("\n".join(lines) + "\n").encode()


def import_solution(p: SdpProblem, data: bytes | str) -> SdpSolution:
    """Parse a CSDP-layout solution and re-verify it against ``p``."""
    text = data.decode() if isinstance(data, (bytes, bytearray)) else data
    blocks, _, _ = _split_free(p)
    lines = [(n, ln.strip()) for n, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise SdpFormatError("empty solution: missing dual vector")
    lineno, first = lines[0]
    try:
        yv = np.array([float(t) for t in _numbers(first)])
    except ValueError:
        raise SdpFormatError(f"line {lineno}: malformed dual vector") from None
    if yv.size != p.m:
        raise SdpFormatError(f"line {lineno}: dual vector has {yv.size} entries, expected {p.m}")
    mats = {1: [np.zeros((s, s)) if s > 0 else np.zeros(-s) for s in blocks],
            2: [np.zeros((s, s)) if s > 0 else np.zeros(-s) for s in blocks]}
    seen = set()
    for lineno, ln in lines[1:]:
        toks = _numbers(ln)
        if len(toks) != 5:
            raise SdpFormatError(f"line {lineno}: expected 'matno blkno i j value'")
        try:
            mat, blk, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
        except ValueError:
            raise SdpFormatError(f"line {lineno}: malformed entry") from None
        if mat not in (1, 2) or not 1 <= blk <= len(blocks):
            raise SdpFormatError(f"line {lineno}: matrix/block number out of range")
        s = blocks[blk - 1]
        i, j = i - 1, j - 1
        if s > 0:
            if not (0 <= i < s and 0 <= j < s):
                raise SdpFormatError(f"line {lineno}: index outside block {blk}")
            mats[mat][blk - 1][i, j] = v
            mats[mat][blk - 1][j, i] = v
        else:
            if i != j or not 0 <= i < -s:
                raise SdpFormatError(f"line {lineno}: off-diagonal entry in diagonal block {blk}")
            mats[mat][blk - 1][i] = v
        seen.add(mat)
    if 1 not in seen:
        raise SdpFormatError("truncated solution: missing dual slack matrix section (matno 1)")
    if 2 not in seen:
        raise SdpFormatError("truncated solution: missing primal matrix section (matno 2)")
    Z, X = mats[1], mats[2]
    x_free = np.zeros(0)
    if p.n_free:
        split = X.pop()
        Z.pop()
        x_free = split[: p.n_free] - split[p.n_free:]
    y = -yv
    res = evaluate_solution(p, X, x_free, y, Z)
    status = status_from_residuals(res)
    return SdpSolution(X, x_free, y, Z, res["primal_obj"], res["dual_obj"], res, status, 0,
                       "imported; residuals recomputed")
