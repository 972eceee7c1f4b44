"""Primal-dual path-following solver for dense block SDPs.

Nesterov-Todd scaling, Mehrotra predictor-corrector, dense Cholesky of the
Schur complement. Free variables are eliminated before the iteration by
projecting the constraints onto the left null space of their coefficient
matrix, so the interior-point loop only ever sees PSD and diagonal blocks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .problem import SdpProblem, SdpSolution, SdpStatus, evaluate_solution, status_from_residuals

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 200
    max_block: int = 400
    step_fraction: float = 0.98
    stall_iters: int = 15
    rank_tol: float = 1e-11
    refine_steps: int = 2


class BlockTooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# presolve: eliminate free variables
# ---------------------------------------------------------------------------
@dataclass
class _Reduced:
    P: np.ndarray | None  # (m', m) orthonormal rows with P B = 0, None if no free vars
    w: np.ndarray  # dual offset, y = w + P^T y'
    recover: np.ndarray | None  # x_free = recover @ (b - A(X))
    const: float  # objective constant w . b
    Ab: list  # per PSD block (m', s, s)
    Cb: list
    psd_ids: list
    Alp: np.ndarray  # (m', L)
    clp: np.ndarray
    lp_ids: list
    b: np.ndarray
    unbounded: bool = False


def _reduce(p: SdpProblem, rank_tol: float) -> _Reduced:
    lay = p.layout
    m = p.m
    C = p.C.copy()
    b = p.b.copy()
    P = None
    w = np.zeros(m)
    recover = None
    const = 0.0
    unbounded = False
    if p.n_free:
        B = p.B.toarray()
        cn = np.linalg.norm(B, axis=0)
        cn[cn == 0] = 1.0
        U, S, Vt = np.linalg.svd(B / cn, full_matrices=True)
        r = int(np.sum(S > rank_tol * max(S[0], 1e-300) * max(B.shape))) if S.size else 0
        Ur, Sr, Vr = U[:, :r], S[:r], Vt[:r].T
        cfs = p.c_free / cn
        # objective must lie in the row space of B, otherwise the free part is unbounded
        resid = cfs - Vr @ (Vr.T @ cfs)
        if np.linalg.norm(resid) > 1e-8 * (1.0 + np.linalg.norm(cfs)):
            unbounded = True
        w = Ur @ ((Vr.T @ cfs) / Sr)
        recover = (Vr / Sr) @ Ur.T / cn[:, None]
        P = U[:, r:].T
        C = C - p.A.T @ w
        const = float(w @ b)
        Ared = (p.A.T @ P.T).T  # dense (m', ncoord)
        b = P @ b
    else:
        Ared = p.A.toarray()
    psd_ids, lp_ids = [], []
    Ab, Cb = [], []
    lp_cols, lp_c = [], []
    mr = Ared.shape[0]
    for k, s in enumerate(p.blocks):
        idx, r, c = lay.entries(k)
        if s > 0:
            full = np.zeros((mr, s, s))
            full[:, r, c] = Ared[:, idx]
            full[:, c, r] = Ared[:, idx]
            Ck = np.zeros((s, s))
            Ck[r, c] = C[idx]
            Ck[c, r] = C[idx]
            Ab.append(full)
            Cb.append(Ck)
            psd_ids.append(k)
        else:
            lp_cols.append(Ared[:, idx])
            lp_c.append(C[idx])
            lp_ids.append(k)
    Alp = np.hstack(lp_cols) if lp_cols else np.zeros((mr, 0))
    clp = np.concatenate(lp_c) if lp_c else np.zeros(0)
    return _Reduced(P, w, recover, const, Ab, Cb, psd_ids, Alp, clp, lp_ids, b, unbounded)


# ---------------------------------------------------------------------------
# the interior-point loop
# ---------------------------------------------------------------------------
def _sym(M):
    return 0.5 * (M + M.T)


def _nt_scaling(X, Z):
    Lx = np.linalg.cholesky(X)
    Lz = np.linalg.cholesky(Z)
    _, sv, Vt = np.linalg.svd(Lz.T @ Lx)
    rs = np.sqrt(sv)
    G = (Lx @ Vt.T) / rs
    Linv = sla.solve_triangular(Lx, np.eye(X.shape[0]), lower=True)
    Ginv = (rs[:, None] * Vt) @ Linv
    return G, Ginv, sv


def _max_step(lam, dS):
    """Largest alpha with diag(lam) + alpha*dS PSD (scaled space)."""
    rl = 1.0 / np.sqrt(lam)
    e = np.linalg.eigvalsh(_sym(dS * rl[:, None] * rl[None, :]))[0]
    return np.inf if e >= 0 else -1.0 / e


def _max_step_lp(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _ipm(red: _Reduced, opts: SolverOptions):
    Ab, Cb, Alp, clp, b = red.Ab, red.Cb, red.Alp, red.clp, red.b
    m = b.size
    sizes = [A.shape[1] for A in Ab]
    L = clp.size
    nu = sum(sizes) + L

    # constraint scaling to unit Frobenius norm, then data normalisation
    rn = np.zeros(m)
    for A in Ab:
        rn += np.einsum("kij,kij->k", A, A)
    rn += np.einsum("kj,kj->k", Alp, Alp)
    rn = np.sqrt(rn)
    rn[rn == 0] = 1.0
    Ab = [A / rn[:, None, None] for A in Ab]
    Alp = Alp / rn[:, None]
    bs = b / rn
    beta_b = max(1.0, np.linalg.norm(bs))
    beta_c = max(1.0, np.sqrt(sum(np.sum(C * C) for C in Cb) + clp @ clp))
    bs = bs / beta_b
    Cs = [C / beta_c for C in Cb]
    cls_ = clp / beta_c
    Af = [A.reshape(m, -1) for A in Ab]

    def A_op(Xs, xl):
        out = Alp @ xl if L else np.zeros(m)
        for F, X in zip(Af, Xs):
            out = out + F @ X.ravel()
        return out

    def At_op(y):
        return [np.tensordot(y, A, axes=1) for A in Ab], (Alp.T @ y if L else np.zeros(0))

    # initial point
    X, Z = [], []
    for A, C, s in zip(Ab, Cs, sizes):
        an = np.sqrt(np.einsum("kij,kij->k", A, A))
        xi = max(10.0, np.sqrt(s), s * np.max((1.0 + np.abs(bs)) / (1.0 + an)))
        eta = max(10.0, np.sqrt(s), an.max(initial=0.0), np.linalg.norm(C))
        X.append(xi * np.eye(s))
        Z.append(eta * np.eye(s))
    if L:
        an = np.linalg.norm(Alp, axis=0)
        xl = np.full(L, max(10.0, np.max((1.0 + np.abs(bs)) / (1.0 + np.linalg.norm(Alp, axis=1)))))
        zl = np.full(L, max(10.0, an.max(initial=0.0), np.abs(cls_).max(initial=0.0)))
    else:
        xl = zl = np.zeros(0)
    y = np.zeros(m)

    normb = np.linalg.norm(b)
    normC = np.sqrt(sum(np.sum(C * C) for C in Cb) + clp @ clp)
    best = None
    status = SdpStatus.STALLED
    message = "iteration limit"
    no_progress = 0
    mu_ref = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        AtY, atyl = At_op(y)
        Rd = [C - T - Z_ for C, T, Z_ in zip(Cs, AtY, Z)]
        rdl = cls_ - atyl - zl
        Rp = bs - A_op(X, xl)
        gap_xz = sum(np.sum(X_ * Z_) for X_, Z_ in zip(X, Z)) + xl @ zl
        mu = gap_xz / nu
        pobj = (sum(np.sum(C * X_) for C, X_ in zip(Cs, X)) + cls_ @ xl) * beta_b * beta_c
        dobj = (bs @ y) * beta_b * beta_c
        relp = np.linalg.norm(Rp * rn) * beta_b / (1.0 + normb)
        reld = np.sqrt(sum(np.sum(R * R) for R in Rd) + rdl @ rdl) * beta_c / (1.0 + normC)
        relg = abs(pobj - dobj) / (1.0 + abs(pobj + red.const) + abs(dobj + red.const))
        merit = max(relp, reld, relg)
        log.debug("it %3d pobj %.10e dobj %.10e p %.2e d %.2e g %.2e mu %.2e",
                  it, pobj + red.const, dobj + red.const, relp, reld, relg, mu)
        if best is None or merit < best[0]:
            best = (merit, [x.copy() for x in X], xl.copy(), y.copy(), [z.copy() for z in Z], zl.copy())
            no_progress = 0
        elif mu < 0.5 * mu_ref:
            no_progress = 0
        else:
            no_progress += 1
        if no_progress == 0:
            mu_ref = mu
        if merit <= opts.tol:
            status, message = SdpStatus.SOLVED, "converged"
            break
        # infeasibility certificates (on the normalised data)
        by = bs @ y
        if by > 0:
            dres = np.sqrt(sum(np.sum((T + Z_) ** 2) for T, Z_ in zip(AtY, Z)) + np.sum((atyl + zl) ** 2))
            if dres < 1e-8 * by and by > 1e6:
                status, message = SdpStatus.INFEASIBLE, "primal infeasible (dual ray)"
                break
        cx = sum(np.sum(C * X_) for C, X_ in zip(Cs, X)) + cls_ @ xl
        if cx < 0:
            pres = np.linalg.norm(A_op(X, xl))
            if pres < 1e-8 * -cx and -cx > 1e6:
                status, message = SdpStatus.INFEASIBLE, "dual infeasible (primal ray)"
                break
        if no_progress >= opts.stall_iters:
            message = "no progress"
            break

        # scaling and Schur complement
        try:
            scal = [_nt_scaling(X_, Z_) for X_, Z_ in zip(X, Z)]
        except np.linalg.LinAlgError:
            message = "lost positive definiteness"
            break
        Ws = [G @ G.T for G, _, _ in scal]
        M = np.zeros((m, m))
        for F, A, W in zip(Af, Ab, Ws):
            T = W @ A @ W
            M += F @ T.reshape(m, -1).T
        if L:
            wl = xl / zl
            M += (Alp * wl) @ Alp.T
        else:
            wl = np.zeros(0)
        M = _sym(M)
        if log.isEnabledFor(logging.DEBUG):
            ev = np.linalg.eigvalsh(M)
            log.debug("    M eig %.3g .. %.3g", ev[0], ev[-1])
        try:
            cf = sla.cho_factor(M, lower=True, check_finite=False)
            solveM = lambda r: sla.cho_solve(cf, r, check_finite=False)
        except np.linalg.LinAlgError:
            reg = 1e-14 * np.trace(M) / m
            try:
                cf = sla.cho_factor(M + reg * np.eye(m), lower=True, check_finite=False)
                solveM = lambda r: sla.cho_solve(cf, r, check_finite=False)
            except np.linalg.LinAlgError:
                lu = sla.lu_factor(M + reg * np.eye(m))
                solveM = lambda r: sla.lu_solve(lu, r)

        def direction(Rc, rcl):
            WRdW = [W @ R @ W for W, R in zip(Ws, Rd)]
            rhs = Rp - A_op([a - c for a, c in zip(Rc, WRdW)], rcl - wl * rdl)
            dy = solveM(rhs)
            # refine against the operator itself, not the rounded Schur matrix
            for _ in range(opts.refine_steps):
                AtdY, atdyl = At_op(dy)
                r = rhs - A_op([W @ T @ W for W, T in zip(Ws, AtdY)], wl * atdyl)
                dy = dy + solveM(r)
            AtdY, atdyl = At_op(dy)
            dZ = [_sym(R - T) for R, T in zip(Rd, AtdY)]
            dX = [_sym(rc - W @ dz @ W) for rc, W, dz in zip(Rc, Ws, dZ)]
            dzl = rdl - atdyl
            dxl = rcl - wl * dzl
            if log.isEnabledFor(logging.DEBUG):
                log.debug("    dir err %.3g (|Rp| %.3g)", np.linalg.norm(A_op(dX, dxl) - Rp), np.linalg.norm(Rp))
            return dX, dxl, dy, dZ, dzl

        def steps(dX, dxl, dZ, dzl):
            ap, ad = np.inf, np.inf
            sX, sZ = [], []
            for (G, Ginv, lam), dx, dz in zip(scal, dX, dZ):
                tx = _sym(Ginv @ dx @ Ginv.T)
                tz = _sym(G.T @ dz @ G)
                sX.append(tx)
                sZ.append(tz)
                ap = min(ap, _max_step(lam, tx))
                ad = min(ad, _max_step(lam, tz))
            if L:
                ap = min(ap, _max_step_lp(xl, dxl))
                ad = min(ad, _max_step_lp(zl, dzl))
            return ap, ad, sX, sZ

        # predictor
        dX, dxl, dy, dZ, dzl = direction([-x for x in X], -xl)
        ap, ad, sXa, sZa = steps(dX, dxl, dZ, dzl)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (
            sum(np.sum((X_ + ap * a) * (Z_ + ad * c)) for X_, a, Z_, c in zip(X, dX, Z, dZ))
            + (xl + ap * dxl) @ (zl + ad * dzl)
        ) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        Rc = []
        for (G, _, lam), tx, tz in zip(scal, sXa, sZa):
            R = sigma * mu * np.eye(lam.size) - np.diag(lam * lam) - _sym(tx @ tz)
            H = 2.0 * R / (lam[:, None] + lam[None, :])
            Rc.append(_sym(G @ H @ G.T))
        if L:
            g = np.sqrt(wl)
            lamv = np.sqrt(xl * zl)
            Hl = (sigma * mu - lamv * lamv - (dxl / g) * (g * dzl)) / lamv
            rcl = g * g * Hl
        else:
            rcl = np.zeros(0)
        dX, dxl, dy, dZ, dzl = direction(Rc, rcl)
        ap, ad, _, _ = steps(dX, dxl, dZ, dzl)
        ap = min(1.0, opts.step_fraction * ap)
        ad = min(1.0, opts.step_fraction * ad)
        X = [X_ + ap * d for X_, d in zip(X, dX)]
        xl = xl + ap * dxl
        y = y + ad * dy
        Z = [Z_ + ad * d for Z_, d in zip(Z, dZ)]
        zl = zl + ad * dzl
        log.debug("    steps ap %.3g ad %.3g sigma %.3g |y| %.3g", ap, ad, sigma, np.linalg.norm(y))
        if max(ap, ad) < 1e-10:
            message = "step length underflow"
            break

    if status != SdpStatus.SOLVED and best is not None and status != SdpStatus.INFEASIBLE:
        _, X, xl, y, Z, zl = best
    # undo scaling
    X = [x * beta_b for x in X]
    xl = xl * beta_b
    y = y * beta_c / rn
    Z = [z * beta_c for z in Z]
    zl = zl * beta_c
    return X, xl, y, Z, zl, status, message, it


def solve(p: SdpProblem, opts: SolverOptions | None = None) -> SdpSolution:
    """Solve ``p`` and return a solution whose residuals are recomputed from ``p``."""
    opts = opts or SolverOptions()
    big = max(abs(s) for s in p.blocks if s > 0) if any(s > 0 for s in p.blocks) else 0
    if big > opts.max_block:
        raise BlockTooLarge(
            f"PSD block of size {big} exceeds the cap {opts.max_block}; export the problem "
            "in SDPA format and use an external solver"
        )
    red = _reduce(p, opts.rank_tol)
    if red.unbounded:
        return SdpSolution([], np.zeros(p.n_free), np.zeros(p.m), [], -np.inf, -np.inf, {},
                           SdpStatus.INFEASIBLE, 0, "objective unbounded along free variables")
    if red.b.size == 0:
        # the free variables absorb every constraint: X = 0 is optimal iff the
        # reduced cost is PSD, otherwise the objective is unbounded below
        X = [np.zeros_like(Ck) for Ck in red.Cb]
        xl = np.zeros(red.clp.size)
        Z, zl, yr = list(red.Cb), red.clp.copy(), np.zeros(0)
        iters = 0
        if all(np.linalg.eigvalsh(Ck)[0] >= 0 for Ck in red.Cb) and np.all(zl >= 0):
            status, message = SdpStatus.SOLVED, "no constraints left after presolve"
        else:
            status, message = SdpStatus.INFEASIBLE, "objective unbounded: reduced cost not PSD"
    else:
        X, xl, yr, Z, zl, status, message, iters = _ipm(red, opts)
    # reassemble full block lists in original order
    Xb, Zb = [None] * len(p.blocks), [None] * len(p.blocks)
    for k, x, z in zip(red.psd_ids, X, Z):
        Xb[k], Zb[k] = x, z
    off = 0
    for k in red.lp_ids:
        s = -p.blocks[k]
        Xb[k], Zb[k] = xl[off:off + s], zl[off:off + s]
        off += s
    if red.P is not None:
        y = red.w + red.P.T @ yr
        x_free = red.recover @ (p.b - p.apply_A(p.layout.pack(Xb)))
    else:
        y = yr
        x_free = np.zeros(0)
    res = evaluate_solution(p, Xb, x_free, y, Zb)
    if status != SdpStatus.INFEASIBLE:
        checked = status_from_residuals(res)
        if checked == SdpStatus.SOLVED:
            status = SdpStatus.SOLVED
        elif status == SdpStatus.SOLVED:
            status = SdpStatus.INACCURATE
    return SdpSolution(Xb, x_free, y, Zb, res["primal_obj"], res["dual_obj"], res, status, iters, message)
