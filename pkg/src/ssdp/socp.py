"""Primal-dual interior-point solver for linear and second-order cone programs.

Problems are handled in the form

    minimize    c @ x + c0
    subject to  A x = b,  G x + s = h,  s in K,

where ``K`` is a nonnegative orthant of dimension ``l`` followed by second-order
cones of sizes ``q_1, ..., q_k`` (head first). The method runs a
Mehrotra-style predictor-corrector on the homogeneous self-dual embedding with
Nesterov-Todd scaling, so infeasible and unbounded problems end with a
certificate instead of diverging.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conic import ConeProgram

_FEAS_EPS = 1e-9  # slack allowed when presolve checks constant rows


class Status(str, Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    DUAL_INFEASIBLE = "DualInfeasible"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


class InconsistentFixing(ValueError):
    """A fixing places a variable outside its bounds."""


@dataclass(frozen=True)
class SolverOptions:
    """Interior-point settings.

    ``tol`` applies to the relative primal and dual residuals and to the
    relative complementarity gap. ``near_tol`` marks a non-converged run whose
    final iterate is still usable.
    """

    tol: float = 1e-8
    max_iter: int = 200
    presolve: bool = True
    equilibrate: bool = True
    predictor_corrector: bool = True
    step_factor: float = 0.99
    near_tol: float = 1e-5
    dense_limit: int = 300

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.step_factor < 1:
            raise ValueError("step_factor must lie in (0, 1)")


@dataclass
class StandardForm:
    """Reduced problem in ``G x + s = h`` form plus the map back to the program.

    ``var_ids[j]`` is the program variable of column ``j``; variables not listed
    are fixed at ``values[k]``. ``verdict`` is set when presolve already
    decided the problem (infeasible or unbounded).
    """

    c: np.ndarray
    c0: float
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    l: int
    soc_dims: list[int]
    var_ids: np.ndarray
    values: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    verdict: Status | None = None

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def cone_dim(self) -> int:
        return self.l + sum(self.soc_dims)

    def recover(self, x: np.ndarray) -> np.ndarray:
        full = self.values.copy()
        full[self.var_ids] = x
        return full


@dataclass
class SolverResult:
    """Outcome of :func:`solve`.

    ``x`` is in the original program's variable space; ``y``, ``z``, ``s`` are
    the equality duals, cone duals and cone slacks of the standard form.
    ``gap`` is the relative complementarity ``s @ z / (1 + |objective|)``.
    For infeasible statuses ``y``/``z`` (or ``x``) hold the normalized
    certificate and ``certificate_residual`` its residual.
    """

    status: Status
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    objective: float
    dual_objective: float
    gap: float
    abs_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    certificate_residual: float = math.nan
    near_optimal: bool = False
    trace: list[tuple[float, ...]] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def usable(self) -> bool:
        """Optimal, or stopped early at an iterate within ``near_tol``."""
        return self.status is Status.OPTIMAL or self.near_optimal

    @property
    def bound(self) -> float:
        """A lower bound on the optimum, valid up to the reported residuals."""
        return min(self.objective, self.dual_objective)


# ---------------------------------------------------------------------------
# standard form and presolve


def _row_key(indices: np.ndarray, data: np.ndarray) -> tuple:
    return (indices.tobytes(), data.tobytes())


def to_standard_form(
    p: ConeProgram,
    fixings: Mapping[int, float] | None = None,
    presolve: bool = True,
) -> StandardForm:
    """Relax integrality, substitute fixed variables and lift rows into cone blocks.

    With ``presolve`` on, singleton rows become bounds, variables whose bounds
    meet are substituted out, empty and duplicate rows are dropped and SOC rows
    with fewer than two nonzero body entries become orthant rows.

    Raises:
        InconsistentFixing: a fixing lies outside the variable's bounds.
    """
    cp = p.compiled()
    n = cp.n
    lb = cp.lb.copy()
    ub = cp.ub.copy()
    for k, v in (fixings or {}).items():
        v = float(v)
        if v < lb[k] - 1e-9 or v > ub[k] + 1e-9:
            raise InconsistentFixing(f"variable {p.variables[k].name} fixed at {v} outside [{lb[k]}, {ub[k]}]")
        lb[k] = ub[k] = v

    A, b = cp.A, cp.b.copy()
    Gl, hl = cp.G_lin, cp.h_lin.copy()
    Gs, hs = cp.G_soc, cp.h_soc.copy()
    verdict = None

    fixed = lb == ub
    if presolve:
        verdict = _tighten_bounds(A, b, Gl, hl, lb, ub, cp.integer, fixed)

    values = np.where(fixed, lb, 0.0)
    free = np.flatnonzero(~fixed)
    fx = np.flatnonzero(fixed)

    def split(M, rhs):
        if fx.size:
            rhs = rhs - M[:, fx] @ values[fx]
        return M[:, free].tocsr(), rhs

    A, b = split(A, b)
    Gl, hl = split(Gl, hl)
    Gs, hs = split(Gs, hs)
    c = cp.c[free]
    c0 = cp.c0 + float(cp.c[fx] @ values[fx])

    # orthant rows: program rows first, then finite bounds of free variables
    lbf, ubf = lb[free], ub[free]
    nf = free.size
    has_lb = np.flatnonzero(np.isfinite(lbf))
    has_ub = np.flatnonzero(np.isfinite(ubf))
    Gb = sp.vstack(
        [
            sp.csr_matrix((-np.ones(has_lb.size), (np.arange(has_lb.size), has_lb)), shape=(has_lb.size, nf)),
            sp.csr_matrix((np.ones(has_ub.size), (np.arange(has_ub.size), has_ub)), shape=(has_ub.size, nf)),
        ]
    )
    hb = np.concatenate([-lbf[has_lb], ubf[has_ub]])

    soc_dims = list(cp.soc_dims)
    if presolve:
        Gs, hs, soc_dims, Gx, hx, bad = _reduce_socs(Gs, hs, soc_dims)
        verdict = verdict or bad
        Gl = sp.vstack([Gl, Gb, Gx]).tocsr()
        hl = np.concatenate([hl, hb, hx])
        Gl, hl, bad = _dedupe_ineq(Gl, hl)
        verdict = verdict or bad
        A, b, bad = _dedupe_eq(A, b)
        verdict = verdict or bad
    else:
        Gl = sp.vstack([Gl, Gb]).tocsr()
        hl = np.concatenate([hl, hb])

    G = sp.vstack([Gl, Gs]).tocsr() if (Gl.shape[0] + Gs.shape[0]) else sp.csr_matrix((0, nf))
    h = np.concatenate([hl, hs])
    if presolve and nf:
        used = np.zeros(nf, dtype=bool)
        for M in (A, G):
            used[M.indices] = True
        idle = np.flatnonzero(~used)
        if np.any(c[idle] != 0):
            verdict = verdict or Status.DUAL_INFEASIBLE
        if idle.size:
            keep = np.flatnonzero(used)
            c0 += 0.0
            free = free[keep]
            c = c[keep]
            A = A[:, keep].tocsr()
            G = G[:, keep].tocsr()
    return StandardForm(
        c=c,
        c0=c0,
        A=A,
        b=b,
        G=G,
        h=h,
        l=Gl.shape[0],
        soc_dims=soc_dims,
        var_ids=free,
        values=values,
        lb=lb,
        ub=ub,
        verdict=verdict,
    )


def _tighten_bounds(A, b, Gl, hl, lb, ub, integer, fixed) -> Status | None:
    """Turn singleton linear rows into bounds, in place, until nothing changes."""
    for _ in range(20):
        changed = False
        vals = np.where(fixed, lb, 0.0)
        for M, rhs, eq in ((A, b, True), (Gl, hl, False)):
            if M.shape[0] == 0:
                continue
            Mf = M.multiply(~fixed[None, :]).tocsr() if fixed.any() else M
            Mf.eliminate_zeros()
            r = rhs - M @ vals
            nnz = np.diff(Mf.indptr)
            for i in np.flatnonzero(nnz == 1):
                k = Mf.indices[Mf.indptr[i]]
                a = Mf.data[Mf.indptr[i]]
                bound = r[i] / a
                if eq:
                    lo = hi = bound
                elif a > 0:
                    lo, hi = -math.inf, bound
                else:
                    lo, hi = bound, math.inf
                if integer[k]:
                    lo = math.ceil(lo - 1e-9) if math.isfinite(lo) else lo
                    hi = math.floor(hi + 1e-9) if math.isfinite(hi) else hi
                if lo > lb[k] + 1e-12:
                    lb[k] = lo
                    changed = True
                if hi < ub[k] - 1e-12:
                    ub[k] = hi
                    changed = True
            for i in np.flatnonzero(nnz == 0):
                viol = abs(r[i]) if eq else -r[i]
                if viol > _FEAS_EPS * (1 + abs(rhs[i])):
                    return Status.PRIMAL_INFEASIBLE
        gap = ub - lb
        if np.any(gap < -1e-9 * (1 + np.abs(lb))):
            return Status.PRIMAL_INFEASIBLE
        with np.errstate(invalid="ignore"):
            newly = ~fixed & np.isfinite(gap) & (gap <= 1e-11 * (1 + np.abs(lb)))
        if newly.any():
            mid = 0.5 * (lb[newly] + ub[newly])
            lb[newly] = ub[newly] = mid
            fixed |= newly
            changed = True
        if not changed:
            break
    np.copyto(fixed, lb == ub)
    return None


def _reduce_socs(Gs, hs, dims):
    """Drop zero body rows; blocks with at most one body entry become orthant rows."""
    keep_rows, new_dims = [], []
    orth_G, orth_h = [], []
    verdict = None
    Gs = Gs.tocsr()
    nnz = np.diff(Gs.indptr)
    start = 0
    for q in dims:
        rows = np.arange(start, start + q)
        start += q
        head, body = rows[0], rows[1:]
        body = body[(nnz[body] > 0) | (hs[body] != 0)]
        if nnz[head] == 0 and np.all(nnz[body] == 0):
            if np.linalg.norm(hs[body]) > hs[head] + _FEAS_EPS * (1 + abs(hs[head])):
                verdict = Status.PRIMAL_INFEASIBLE
            continue
        if body.size == 0:
            orth_G.append(Gs[[head]])
            orth_h.append(hs[[head]])
        elif body.size == 1:
            g0, g1 = Gs[[head]], Gs[body]
            orth_G += [g0 - g1, g0 + g1]
            orth_h += [hs[[head]] - hs[body], hs[[head]] + hs[body]]
        else:
            keep_rows.append(np.concatenate([[head], body]))
            new_dims.append(1 + body.size)
    idx = np.concatenate(keep_rows) if keep_rows else np.zeros(0, dtype=int)
    n = Gs.shape[1]
    Gx = sp.vstack(orth_G).tocsr() if orth_G else sp.csr_matrix((0, n))
    hx = np.concatenate(orth_h) if orth_h else np.zeros(0)
    return Gs[idx], hs[idx], new_dims, Gx, hx, verdict


def _dedupe_ineq(G, h):
    G = G.tocsr()
    G.sum_duplicates()
    G.eliminate_zeros()
    best: dict[tuple, int] = {}
    keep = []
    verdict = None
    for i in range(G.shape[0]):
        lo, hi = G.indptr[i], G.indptr[i + 1]
        if lo == hi:
            if h[i] < -_FEAS_EPS * (1 + abs(h[i])):
                verdict = Status.PRIMAL_INFEASIBLE
            continue
        key = _row_key(G.indices[lo:hi], G.data[lo:hi])
        j = best.get(key)
        if j is None:
            best[key] = len(keep)
            keep.append(i)
        elif h[i] < h[keep[j]]:
            keep[j] = i
    keep_arr = np.array(sorted(keep), dtype=int)
    return G[keep_arr], h[keep_arr], verdict


def _dedupe_eq(A, b):
    A = A.tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    seen: dict[tuple, int] = {}
    keep = []
    verdict = None
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        if lo == hi:
            if abs(b[i]) > _FEAS_EPS * (1 + abs(b[i])):
                verdict = Status.PRIMAL_INFEASIBLE
            continue
        key = _row_key(A.indices[lo:hi], A.data[lo:hi])
        j = seen.get(key)
        if j is None:
            seen[key] = i
            keep.append(i)
        elif abs(b[i] - b[j]) > _FEAS_EPS * (1 + abs(b[i])):
            verdict = Status.PRIMAL_INFEASIBLE
    keep_arr = np.array(keep, dtype=int)
    return A[keep_arr], b[keep_arr], verdict


# ---------------------------------------------------------------------------
# cone arithmetic


class _Cone:
    """Vectorized Jordan-algebra helpers for an orthant followed by SOC blocks."""

    def __init__(self, l: int, q: list[int]):
        self.l = l
        self.q = np.asarray(q, dtype=int)
        self.nq = self.q.size
        self.m = l + int(self.q.sum())
        self.degree = l + self.nq
        offs = np.concatenate([[0], np.cumsum(self.q)[:-1]]).astype(int) if self.nq else np.zeros(0, int)
        self.heads = l + offs  # global index of each head
        self.rel = offs  # head offsets within the SOC part
        self.head_mask = np.zeros(self.m - l, dtype=bool)
        self.head_mask[self.rel] = True
        self.jsign = np.where(self.head_mask, 1.0, -1.0)
        # dense pattern of every SOC block for scaling-matrix assembly
        bi, bj, blk = [], [], []
        for k in range(self.nq):
            ix = np.arange(self.heads[k], self.heads[k] + self.q[k])
            r, c = np.meshgrid(ix, ix, indexing="ij")
            bi.append(r.ravel())
            bj.append(c.ravel())
            blk.append(np.full(r.size, k))
        self.bi = np.concatenate(bi) if bi else np.zeros(0, int)
        self.bj = np.concatenate(bj) if bj else np.zeros(0, int)
        self.bblk = np.concatenate(blk) if blk else np.zeros(0, int)
        self.bdiag_sign = np.where(self.bi == self.bj, np.where(np.isin(self.bi, self.heads), 1.0, -1.0), 0.0)

    def seg(self, v: np.ndarray) -> np.ndarray:
        return np.add.reduceat(v, self.rel) if self.nq else np.zeros(0)

    def rep(self, v: np.ndarray) -> np.ndarray:
        return np.repeat(v, self.q)

    def tail(self, v: np.ndarray) -> np.ndarray:
        t = v[self.l :].copy()
        t[self.rel] = 0.0
        return t

    def e(self) -> np.ndarray:
        out = np.zeros(self.m)
        out[: self.l] = 1.0
        out[self.heads] = 1.0
        return out

    def det(self, v: np.ndarray) -> np.ndarray:
        """``v0**2 - |v1|**2`` per SOC block, factored to limit cancellation."""
        t = self.tail(v)
        nt = np.sqrt(self.seg(t * t))
        h = v[self.heads]
        return (h - nt) * (h + nt)

    def min_eig(self, v: np.ndarray) -> float:
        vals = [np.min(v[: self.l])] if self.l else []
        if self.nq:
            t = self.tail(v)
            vals.append(np.min(v[self.heads] - np.sqrt(self.seg(t * t))))
        return float(min(vals)) if vals else 1.0

    def circ(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        l = self.l
        out[:l] = u[:l] * v[:l]
        if self.nq:
            uq, vq = u[l:], v[l:]
            ut, vt = self.tail(u), self.tail(v)
            part = self.rep(u[self.heads]) * vt + self.rep(v[self.heads]) * ut
            part[self.rel] = self.seg(uq * vq)
            out[l:] = part
        return out

    def inv_circ(self, lam: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Solve ``lam o x = v`` for ``x``."""
        out = np.empty(self.m)
        l = self.l
        out[:l] = v[:l] / lam[:l]
        if self.nq:
            l0, v0 = lam[self.heads], v[self.heads]
            lt, vt = self.tail(lam), self.tail(v)
            det = l0 * l0 - self.seg(lt * lt)
            x0 = (l0 * v0 - self.seg(lt * vt)) / det
            part = (vt - self.rep(x0) * lt) / self.rep(l0)
            part[self.rel] = x0
            out[l:] = part
        return out

    def max_step(self, u: np.ndarray, d: np.ndarray) -> float:
        """Largest ``a`` with ``u + a d`` in the cone (``inf`` when unbounded)."""
        best = math.inf
        l = self.l
        if l:
            neg = d[:l] < 0
            if neg.any():
                best = float(np.min(-u[:l][neg] / d[:l][neg]))
        if self.nq:
            ut = self.tail(u)
            sd = np.sqrt(np.maximum(self.det(u), 1e-300))
            lb0 = u[self.heads] / sd
            lbt = ut / self.rep(sd)
            d0 = d[self.heads]
            dt = self.tail(d)
            rho0 = (lb0 * d0 - self.seg(lbt * dt)) / sd
            fac = (rho0 + d0 / sd) / (lb0 + 1.0)
            rho1 = dt / self.rep(sd) - self.rep(fac) * lbt
            t = np.sqrt(self.seg(rho1 * rho1)) - rho0
            pos = t > 0
            if pos.any():
                best = min(best, float(np.min(1.0 / t[pos])))
        return best


@dataclass
class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^-1 s = lam``."""

    cone: _Cone
    w_orth: np.ndarray
    wbar: np.ndarray  # SOC part, block layout
    eta: np.ndarray
    lam: np.ndarray

    @classmethod
    def build(cls, cone: _Cone, s: np.ndarray, z: np.ndarray) -> "_Scaling":
        l = cone.l
        w_orth = np.sqrt(s[:l] / z[:l])
        wbar = np.zeros(cone.m - l)
        eta = np.zeros(cone.nq)
        if cone.nq:
            sdet = np.maximum(cone.det(s), 1e-300)
            zdet = np.maximum(cone.det(z), 1e-300)
            sb = s[l:] / cone.rep(np.sqrt(sdet))
            zb = z[l:] / cone.rep(np.sqrt(zdet))
            gamma = np.sqrt(np.maximum((1.0 + cone.seg(sb * zb)) / 2.0, 1e-300))
            wbar = (sb + cone.jsign * zb) / cone.rep(2.0 * gamma)
            eta = (sdet / zdet) ** 0.25
        out = cls(cone, w_orth, wbar, eta, np.zeros(cone.m))
        out.lam = out.apply(z)
        return out

    def _soc(self, v: np.ndarray, inverse: bool) -> np.ndarray:
        cone = self.cone
        vq = v[cone.l :]
        w0 = self.wbar[cone.rel]
        wt = self.wbar.copy()
        wt[cone.rel] = 0.0
        v0 = vq[cone.rel]
        vt = vq.copy()
        vt[cone.rel] = 0.0
        wv = cone.seg(wt * vt)
        if inverse:
            head = (w0 * v0 - wv) / self.eta
            coef = (-v0 + wv / (1.0 + w0)) / self.eta
            out = vt / cone.rep(self.eta) + cone.rep(coef) * wt
        else:
            head = self.eta * (w0 * v0 + wv)
            coef = self.eta * (v0 + wv / (1.0 + w0))
            out = vt * cone.rep(self.eta) + cone.rep(coef) * wt
        out[cone.rel] = head
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        l = self.cone.l
        out[:l] = self.w_orth * v[:l]
        if self.cone.nq:
            out[l:] = self._soc(v, inverse=False)
        return out

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        l = self.cone.l
        out[:l] = v[:l] / self.w_orth
        if self.cone.nq:
            out[l:] = self._soc(v, inverse=True)
        return out

    def squared_entries(self):
        """``(diag of orthant part, values on the dense SOC block pattern)``."""
        cone = self.cone
        vals = np.zeros(0)
        if cone.nq:
            wfull = np.zeros(cone.m)
            wfull[cone.l :] = self.wbar
            eta2 = self.eta[cone.bblk] ** 2
            vals = eta2 * (2.0 * wfull[cone.bi] * wfull[cone.bj] - cone.bdiag_sign)
        return self.w_orth**2, vals


# ---------------------------------------------------------------------------
# KKT system


class _KKT:
    """Factor and solve ``[[0, A', G'], [A, 0, 0], [G, 0, -W^2]]`` with refinement."""

    def __init__(self, A, G, cone: _Cone, delta: float, dense_limit: int):
        self.n = A.shape[1]
        self.p = A.shape[0]
        self.m = G.shape[0]
        self.cone = cone
        self.N = self.n + self.p + self.m
        self.delta = delta
        self.dense = self.N <= dense_limit
        Ac, Gc = A.tocoo(), G.tocoo()
        n, p = self.n, self.p
        rows = np.concatenate([Ac.row + n, Gc.row + n + p, Ac.col, Gc.col])
        cols = np.concatenate([Ac.col, Gc.col, Ac.row + n, Gc.row + n + p])
        vals = np.concatenate([Ac.data, Gc.data, Ac.data, Gc.data])
        K = sp.csr_matrix((vals, (rows, cols)), shape=(self.N, self.N))
        self.K0 = K
        self.reg = np.concatenate([np.full(self.n, delta), np.full(self.p, -delta), np.full(self.m, -delta)])
        self.off = self.n + self.p
        if self.dense:
            self.K0d = K.toarray()
            return
        # fixed CSC pattern: K0, full diagonal, orthant diagonal, SOC blocks
        off, l = self.off, cone.l
        diag = np.arange(self.N)
        prow = np.concatenate([rows, diag, np.arange(off, off + l), off + cone.bi])
        pcol = np.concatenate([cols, diag, np.arange(off, off + l), off + cone.bj])
        keys, self._inv = np.unique(pcol.astype(np.int64) * self.N + prow, return_inverse=True)
        self._indices = (keys % self.N).astype(np.int32)
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(keys // self.N, minlength=self.N))]).astype(np.int32)
        self._nnz = keys.size
        self._base = np.concatenate([vals, np.zeros(self.N)])
        self._split = vals.size + self.N

    def _csc(self, data: np.ndarray) -> sp.csc_matrix:
        return sp.csc_matrix((data, self._indices, self._indptr), shape=(self.N, self.N))

    def factor(self, orth_diag: np.ndarray, soc_vals: np.ndarray) -> None:
        off, l, cone = self.off, self.cone.l, self.cone
        if self.dense:
            K = self.K0d.copy()
            di = np.arange(off, off + l)
            K[di, di] -= orth_diag
            if soc_vals.size:
                K[off + cone.bi, off + cone.bj] -= soc_vals
            self.Kt = K
            Kr = K.copy()
            Kr[np.diag_indices(self.N)] += self.reg
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self.lu = sla.lu_factor(Kr, check_finite=False)
        else:
            vals = np.concatenate([self._base, -orth_diag, -soc_vals])
            data_t = np.bincount(self._inv, weights=vals, minlength=self._nnz)
            vals[vals.size - l - soc_vals.size - self.N : vals.size - l - soc_vals.size] = self.reg
            data_r = np.bincount(self._inv, weights=vals, minlength=self._nnz)
            self.Kt = self._csc(data_t)
            self.lu = spla.splu(self._csc(data_r))

    def _raw(self, r):
        if self.dense:
            return sla.lu_solve(self.lu, r, check_finite=False)
        return self.lu.solve(r)

    def solve(self, rhs: np.ndarray, steps: int = 10) -> np.ndarray:
        x = self._raw(rhs)
        nrm = 1.0 + np.linalg.norm(rhs, np.inf)
        res = np.linalg.norm(rhs - self.Kt @ x, np.inf)
        for _ in range(steps):
            if res <= 1e-15 * nrm:
                break
            cand = x + self._raw(rhs - self.Kt @ x)
            cres = np.linalg.norm(rhs - self.Kt @ cand, np.inf)
            if not cres < res:
                break
            x, res = cand, cres
        return x


# ---------------------------------------------------------------------------
# equilibration


def _equilibrate(A, G, cone: _Cone, passes: int = 15):
    """Ruiz scaling; SOC blocks share one row factor so the cone is preserved."""
    n = A.shape[1]
    D = np.ones(n)
    EA = np.ones(A.shape[0])
    EG = np.ones(G.shape[0])
    As, Gs = A.tocsc(), G.tocsc()
    blk_of = np.concatenate([np.arange(cone.l), cone.l + np.repeat(np.arange(cone.nq), cone.q)]).astype(int)
    nblk = cone.l + cone.nq
    for _ in range(passes):
        cn = np.zeros(n)
        if As.nnz:
            cn = np.maximum(cn, abs(As).max(axis=0).toarray().ravel())
        if Gs.nnz:
            cn = np.maximum(cn, abs(Gs).max(axis=0).toarray().ravel())
        cn[cn == 0] = 1.0
        ra = abs(As).max(axis=1).toarray().ravel() if As.shape[0] else np.zeros(0)
        ra[ra == 0] = 1.0
        rg = abs(Gs).max(axis=1).toarray().ravel() if Gs.shape[0] else np.zeros(0)
        if rg.size:
            bm = np.zeros(nblk)
            np.maximum.at(bm, blk_of, rg)
            bm[bm == 0] = 1.0
            rg = bm[blk_of]
        dc, da, dg = 1 / np.sqrt(cn), 1 / np.sqrt(ra), 1 / np.sqrt(rg)
        if max(np.max(abs(1 - cn)) if cn.size else 0, np.max(abs(1 - ra)) if ra.size else 0, np.max(abs(1 - rg)) if rg.size else 0) < 0.1:
            break
        D *= dc
        EA *= da
        EG *= dg
        As = sp.diags(da) @ As @ sp.diags(dc)
        Gs = sp.diags(dg) @ Gs @ sp.diags(dc)
    return As.tocsr(), Gs.tocsr(), D, EA, EG


# ---------------------------------------------------------------------------
# main loop


def _empty_result(sf: StandardForm, status: Status) -> SolverResult:
    x = sf.recover(np.zeros(sf.n))
    obj = math.inf if status is Status.PRIMAL_INFEASIBLE else -math.inf
    return SolverResult(
        status, x, np.zeros(sf.A.shape[0]), np.zeros(sf.G.shape[0]), np.zeros(sf.G.shape[0]),
        obj, obj, math.nan, math.nan, math.nan, math.nan, 0, certificate_residual=0.0,
    )


def solve(sf: StandardForm, opts: SolverOptions | None = None) -> SolverResult:
    """Solve a standard-form conic program.

    Deterministic: identical inputs produce identical iterates and traces.
    """
    # Blow-ups near the boundary are detected from the iterates themselves.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve(sf, opts or SolverOptions())


def _solve(sf: StandardForm, opts: SolverOptions) -> SolverResult:
    if sf.verdict is not None:
        return _empty_result(sf, sf.verdict)
    cone = _Cone(sf.l, sf.soc_dims)
    n, p, m = sf.n, sf.A.shape[0], sf.G.shape[0]
    c_u, b_u, h_u = sf.c, sf.b, sf.h
    A_u, G_u = sf.A, sf.G
    if opts.equilibrate and n:
        A, G, D, EA, EG = _equilibrate(A_u, G_u, cone)
    else:
        A, G, D, EA, EG = A_u.tocsr(), G_u.tocsr(), np.ones(n), np.ones(p), np.ones(m)
    c, b, h = D * c_u, EA * b_u, EG * h_u
    kkt = _KKT(A, G, cone, delta=1e-12, dense_limit=opts.dense_limit)

    # initial point from two least-squares style solves
    kkt.factor(np.ones(cone.l), _identity_soc(cone))
    sol = kkt.solve(np.concatenate([np.zeros(n), b, h]))
    x = sol[:n]
    s = -sol[n + p :]
    s = _shift_into_cone(cone, s)
    sol = kkt.solve(np.concatenate([-c, np.zeros(p), np.zeros(m)]))
    y = sol[n : n + p]
    z = _shift_into_cone(cone, sol[n + p :])
    tau = kappa = 1.0

    nb, nh, nc = np.linalg.norm(b_u), np.linalg.norm(h_u), np.linalg.norm(c_u)
    e = cone.e()
    trace: list[tuple[float, ...]] = []
    status = Status.ITERATION_LIMIT
    stalls = 0
    cert_res = math.nan
    metrics = best = None
    best_merit = math.inf
    best_it = 0
    it = 0
    for it in range(opts.max_iter + 1):
        # metrics in the unscaled space
        xr, yr, zr, sr = D * x, EA * y, EG * z, s / EG
        xu, yu, zu, su = xr / tau, yr / tau, zr / tau, sr / tau
        pres = max(
            np.linalg.norm(A_u @ xu - b_u) / (1 + nb) if p else 0.0,
            np.linalg.norm(G_u @ xu + su - h_u) / (1 + nh) if m else 0.0,
        )
        dres = np.linalg.norm(A_u.T @ yu + G_u.T @ zu + c_u) / (1 + nc)
        pcost = float(c_u @ xu) + sf.c0
        dcost = float(-b_u @ yu - h_u @ zu) + sf.c0
        abs_gap = float(su @ zu)
        rel_gap = abs_gap / (1 + abs(pcost))
        metrics = (xu, yu, zu, su, pcost, dcost, rel_gap, abs_gap, pres, dres)
        merit = max(pres, dres, min(rel_gap, abs_gap))
        if merit < best_merit:
            best_merit, best, best_it = merit, metrics, it
        elif best_merit <= opts.near_tol and it - best_it >= 8:
            # no progress near the optimum: keep the best iterate
            status = Status.NUMERICAL_FAILURE
            break
        if not all(map(math.isfinite, (pres, dres, pcost, dcost, abs_gap))):
            status = Status.NUMERICAL_FAILURE
            break
        if pres <= opts.tol and dres <= opts.tol and (rel_gap <= opts.tol or abs_gap <= opts.tol):
            status = Status.OPTIMAL
            break
        bz = float(b_u @ yr + h_u @ zr)
        if bz < 0:
            res = np.linalg.norm(A_u.T @ yr + G_u.T @ zr) / -bz
            if res <= opts.tol and tau < kappa:
                status, cert_res = Status.PRIMAL_INFEASIBLE, res
                break
        cx = float(c_u @ xr)
        if cx < 0:
            res = max(
                np.linalg.norm(A_u @ xr) if p else 0.0,
                np.linalg.norm(G_u @ xr + sr) if m else 0.0,
            ) / -cx
            if res <= opts.tol and tau < kappa:
                status, cert_res = Status.DUAL_INFEASIBLE, res
                break
        if it == opts.max_iter:
            break

        r_x = -(A.T @ y + G.T @ z + c * tau)
        r_y = A @ x - b * tau
        r_z = s + G @ x - h * tau
        r_t = kappa + c @ x + b @ y + h @ z
        W = _Scaling.build(cone, s, z)
        lam = W.lam
        try:
            kkt.factor(*W.squared_entries())
        except (RuntimeError, ValueError, np.linalg.LinAlgError):
            status = Status.NUMERICAL_FAILURE
            break
        sol1 = kkt.solve(np.concatenate([-c, b, h]))
        x1, y1, z1 = sol1[:n], sol1[n : n + p], sol1[n + p :]
        denom1 = c @ x1 + b @ y1 + h @ z1

        def direction(sig, d_s, d_k):
            rhs = np.concatenate([(1 - sig) * r_x, -(1 - sig) * r_y, -(1 - sig) * r_z + W.apply(cone.inv_circ(lam, d_s))])
            sol2 = kkt.solve(rhs)
            x2, y2, z2 = sol2[:n], sol2[n : n + p], sol2[n + p :]
            dt = (-(1 - sig) * r_t + d_k / tau - (c @ x2 + b @ y2 + h @ z2)) / (denom1 - kappa / tau)
            dx, dy, dz = x2 + dt * x1, y2 + dt * y1, z2 + dt * z1
            ds = -W.apply(cone.inv_circ(lam, d_s) + W.apply(dz))
            dk = -(d_k + kappa * dt) / tau
            return dx, dy, dz, ds, dt, dk

        def step_to_boundary(ds, dz, dt, dk):
            a = min(cone.max_step(s, ds), cone.max_step(z, dz))
            if dt < 0:
                a = min(a, -tau / dt)
            if dk < 0:
                a = min(a, -kappa / dk)
            return a

        mu = (s @ z + tau * kappa) / (cone.degree + 1)
        lam2 = cone.circ(lam, lam)
        if opts.predictor_corrector:
            dxa, dya, dza, dsa, dta, dka = direction(0.0, lam2, kappa * tau)
            a_aff = min(1.0, step_to_boundary(dsa, dza, dta, dka))
            sigma = min(1.0, max(0.0, (1.0 - a_aff) ** 3))
            d_s = lam2 + cone.circ(W.apply_inv(dsa), W.apply(dza)) - sigma * mu * e
            d_k = kappa * tau + dka * dta - sigma * mu
        else:
            sigma = 0.1
            d_s = lam2 - sigma * mu * e
            d_k = kappa * tau - sigma * mu
        dx, dy, dz, ds, dt, dk = direction(sigma, d_s, d_k)
        alpha = min(1.0, opts.step_factor * step_to_boundary(ds, dz, dt, dk))
        if not math.isfinite(alpha) or not np.all(np.isfinite(dx)):
            status = Status.NUMERICAL_FAILURE
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dt
        kappa = kappa + alpha * dk
        trace.append((float(it), pcost, dcost, rel_gap, pres, dres, kappa / tau, alpha, sigma))
        stalls = stalls + 1 if alpha < 1e-9 else 0
        if stalls >= 5 or tau <= 0 or kappa < 0:
            status = Status.NUMERICAL_FAILURE
            break

    if status in (Status.ITERATION_LIMIT, Status.NUMERICAL_FAILURE) and best is not None:
        metrics = best
    xu, yu, zu, su, pcost, dcost, rel_gap, abs_gap, pres, dres = metrics
    if status is Status.PRIMAL_INFEASIBLE:
        scale = -float(b_u @ (EA * y) + h_u @ (EG * z))
        yu, zu = EA * y / scale, EG * z / scale
        pcost = dcost = math.inf
    elif status is Status.DUAL_INFEASIBLE:
        scale = -float(c_u @ (D * x))
        xu, su = D * x / scale, s / EG / scale
        pcost = dcost = -math.inf
    near = status is not Status.OPTIMAL and status in (Status.ITERATION_LIMIT, Status.NUMERICAL_FAILURE) and max(pres, dres, min(rel_gap, abs_gap)) <= opts.near_tol
    return SolverResult(
        status=status,
        x=sf.recover(xu),
        y=yu,
        z=zu,
        s=su,
        objective=pcost,
        dual_objective=dcost,
        gap=rel_gap,
        abs_gap=abs_gap,
        primal_residual=pres,
        dual_residual=dres,
        iterations=it,
        certificate_residual=cert_res,
        near_optimal=bool(near),
        trace=trace,
    )


def _identity_soc(cone: _Cone) -> np.ndarray:
    return np.where(cone.bi == cone.bj, 1.0, 0.0)


def _shift_into_cone(cone: _Cone, v: np.ndarray) -> np.ndarray:
    if cone.m == 0:
        return v
    a = -cone.min_eig(v)
    if a < 0:
        return v
    return v + (1.0 + a) * cone.e()


def solve_program(
    p: ConeProgram,
    fixings: Mapping[int, float] | None = None,
    opts: SolverOptions | None = None,
) -> SolverResult:
    """Convenience wrapper: standard form, then :func:`solve`."""
    opts = opts or SolverOptions()
    return solve(to_standard_form(p, fixings, presolve=opts.presolve), opts)
