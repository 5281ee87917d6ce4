"""Solver contract for PSD feasibility with linear equalities.

The one external numerical dependency lives behind ``solve``: any conic
solver with a semidefinite cone can back it. Verdicts are never passed
through raw: a feasible answer is re-verified by substituting the blocks
into the equality system and eigen-checking, and an infeasible answer is
accepted only when the returned Farkas ray actually certifies it.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

DEFAULT_TOL = 1e-8
RELAXED_TOL = 1e-6
POST_RESIDUAL_TOL = 1e-7
POST_EIG_TOL = -1e-7

_SQRT2 = np.sqrt(2.0)


@dataclass
class SDPSolution:
    status: str  # feasible | infeasible | inaccurate | failed
    blocks: dict = field(default_factory=dict)
    max_residual: float = np.nan
    min_eigs: dict = field(default_factory=dict)
    iterations: int = 0
    solve_time: float = 0.0
    backend: str = ""
    message: str = ""

    @property
    def feasible(self):
        return self.status == "feasible"


def _blocks_from_x(problem, x):
    offs, _ = problem.var_offsets()
    out = {}
    for b, off in zip(problem.blocks, offs):
        M = np.zeros((b.dim, b.dim))
        k = off
        for j in range(b.dim):
            for i in range(j + 1):
                M[i, j] = x[k]
                M[j, i] = x[k]
                k += 1
        out[b.name] = M
    return out


def _post_check(problem, blocks):
    residual = problem.residuals(blocks)
    min_eigs = {}
    for b in problem.blocks:
        if b.psd:
            M = blocks[b.name]
            min_eigs[b.name] = float(np.linalg.eigvalsh(M)[0]) if b.dim else 0.0
    ok = residual <= POST_RESIDUAL_TOL and \
        all(v >= POST_EIG_TOL for v in min_eigs.values())
    return ok, residual, min_eigs


def _svec_positions(dim, order):
    """Matrix positions of the scaled-svec layout a backend expects.

    clarabel packs the upper triangle column-major; scs packs the lower
    triangle column-major. Both scale off-diagonals by sqrt(2).
    """
    if order == "upper-col":
        return [(i, j) for j in range(dim) for i in range(j + 1)]
    if order == "lower-col":
        return [(i, j) for j in range(dim) for i in range(j, dim)]
    raise ValueError(f"unknown svec order {order!r}")


def _cone_rows(problem, order):
    """Rows tying raw upper-triangle variables to scaled-svec cone slacks."""
    offs, nvar = problem.var_offsets()
    rows, cols, vals, dims = [], [], [], []
    r = 0
    for b, off in zip(problem.blocks, offs):
        if not b.psd:
            continue
        dims.append(b.dim)
        for (i, j) in _svec_positions(b.dim, order):
            rows.append(r)
            cols.append(off + problem.tri_index(min(i, j), max(i, j)))
            vals.append(1.0 if i == j else _SQRT2)
            r += 1
    mat = sparse.coo_matrix((vals, (rows, cols)), shape=(r, nvar))
    return mat.tocsc(), dims


def _blocks_from_s(problem, x, s_cone, order):
    """Decode block matrices, taking PSD blocks from the cone slack.

    The slack side of a conic solver is the projected, certified-in-cone
    iterate, so eigenvalue checks run against exactly what the solver
    guaranteed; non-cone blocks fall back to the raw variables.
    """
    blocks = _blocks_from_x(problem, x)
    k = 0
    for b in problem.blocks:
        if not b.psd:
            continue
        M = np.zeros((b.dim, b.dim))
        for (i, j) in _svec_positions(b.dim, order):
            v = s_cone[k] if i == j else s_cone[k] / _SQRT2
            M[i, j] = v
            M[j, i] = v
            k += 1
        blocks[b.name] = M
    return blocks


def _eq_matrix(problem, equilibrate=True):
    """Equality rows as a sparse matrix, with matching right-hand side.

    Rows are rescaled to unit max coefficient: monomial-basis matching rows
    span many orders of magnitude, which first-order solvers tolerate badly.
    The variable space is untouched, so solutions decode identically.
    """
    offs, nvar = problem.var_offsets()
    mat = sparse.coo_matrix((problem.val, (problem.row, problem.col)),
                            shape=(problem.n_rows, nvar)).tocsr()
    rhs = problem.rhs.copy()
    if equilibrate and problem.n_rows:
        scale = np.zeros(problem.n_rows)
        np.maximum.at(scale, problem.row, np.abs(problem.val))
        np.maximum.at(scale, np.arange(problem.n_rows), np.abs(rhs))
        scale[scale == 0.0] = 1.0
        mat = sparse.diags(1.0 / scale) @ mat
        rhs = rhs / scale
    return mat.tocsc(), rhs


def _verify_farkas_ray(A, b, y, psd_row_count, dims, order):
    """Accept an infeasibility claim only if y is an improving ray.

    Needs A' y ~ 0, b' y < 0, and the PSD-cone components of y in the cone.
    """
    obj = float(b @ y)
    if not obj < 0.0:
        return False
    y = y / (-obj)
    res = np.max(np.abs(A.T @ y)) if A.shape[0] else 0.0
    if res > 1e-6 * max(1.0, np.max(np.abs(y))):
        return False
    tail = y[len(y) - psd_row_count:]
    k = 0
    for d in dims:
        m = d * (d + 1) // 2
        M = _unsvec(tail[k:k + m], d, order)
        k += m
        if d and float(np.linalg.eigvalsh(M)[0]) < -1e-6 * max(1.0, np.max(np.abs(M))):
            return False
    return True


def _unsvec(v, d, order):
    M = np.zeros((d, d))
    for k, (i, j) in enumerate(_svec_positions(d, order)):
        val = v[k] if i == j else v[k] / _SQRT2
        M[i, j] = val
        M[j, i] = val
    return M


def _solve_clarabel(problem, tol, max_time):
    import clarabel

    order = "upper-col"
    A_eq, rhs = _eq_matrix(problem)
    A_cone, dims = _cone_rows(problem, order)
    n_eq = A_eq.shape[0]
    nvar = A_eq.shape[1]
    A = sparse.vstack([A_eq, -A_cone]).tocsc()
    b = np.concatenate([rhs, np.zeros(A_cone.shape[0])])
    cones = [clarabel.ZeroConeT(n_eq)]
    cones.extend(clarabel.PSDTriangleConeT(d) for d in dims)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    if max_time:
        settings.time_limit = max_time
    solver = clarabel.DefaultSolver(
        sparse.csc_matrix((nvar, nvar)), np.zeros(nvar), A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    s_cone = np.asarray(sol.s)[n_eq:]
    meta = {"iterations": int(sol.iterations),
            "solve_time": float(sol.solve_time)}
    blocks = _blocks_from_s(problem, x, s_cone, order)
    if status in ("Solved", "AlmostSolved"):
        return "candidate", blocks, meta
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        ok = _verify_farkas_ray(A, b, z, A_cone.shape[0], dims, order)
        certain = ok and status == "PrimalInfeasible"
        return ("infeasible" if certain else "inaccurate"), blocks, meta
    if status == "DualInfeasible":
        # a feasibility problem with zero objective cannot be unbounded;
        # treat as a numerical breakdown
        return "inaccurate", blocks, meta
    if status in ("MaxIterations", "MaxTime", "InsufficientProgress",
                  "NumericalError"):
        return "inaccurate", blocks, meta
    return "failed", blocks, meta


def _solve_scs(problem, tol, max_time):
    """Feasibility via the max-margin program  max t : rows, M_j >= t I.

    A pure feasibility problem leaves a splitting solver without a descent
    direction and it stalls on the degenerate faces of Gram
    parameterizations; maximizing the worst block eigenvalue restores fast
    convergence and decides both directions: a positive optimal margin is a
    strictly feasible point, a negative one proves that no solution of the
    equalities is componentwise PSD.
    """
    import scs

    order = "lower-col"
    A_eq, rhs = _eq_matrix(problem)
    A_cone, dims = _cone_rows(problem, order)
    n_eq = A_eq.shape[0]
    nvar = A_eq.shape[1]
    ncone = A_cone.shape[0]

    diag_rows = []
    r = 0
    for d in dims:
        for (i, j) in _svec_positions(d, order):
            if i == j:
                diag_rows.append(r)
            r += 1
    tcol = sparse.coo_matrix(
        (np.ones(len(diag_rows)), (diag_rows, np.zeros(len(diag_rows)))),
        shape=(ncone, 1))
    # rows: equalities (zero cone), t <= 1 (nonnegative cone), PSD slacks
    A = sparse.vstack([
        sparse.hstack([A_eq, sparse.coo_matrix((n_eq, 1))]),
        sparse.coo_matrix((np.array([1.0]), ([0], [nvar])),
                          shape=(1, nvar + 1)),
        sparse.hstack([-A_cone, tcol]),
    ]).tocsc()
    b = np.concatenate([rhs, [1.0], np.zeros(ncone)])
    c = np.zeros(nvar + 1)
    c[nvar] = -1.0
    cone = {"z": n_eq, "l": 1, "s": dims}
    solver = scs.SCS({"A": A, "b": b, "c": c}, cone, eps_abs=tol, eps_rel=tol,
                     verbose=False, max_iters=200_000,
                     time_limit_secs=max_time or 0.0)
    out = solver.solve()
    status = out["info"]["status"]
    x = np.asarray(out["x"])
    y = np.asarray(out["y"])
    meta = {"iterations": int(out["info"]["iter"]),
            "solve_time": float(out["info"]["solve_time"]) / 1000.0,
            "margin": float(x[nvar]) if len(x) > nvar else np.nan}
    s_cone = np.asarray(out["s"])[n_eq + 1:]
    margin = meta["margin"]
    # blocks decode: M = (cone slack) + t I
    blocks = _blocks_from_s(problem, x[:nvar], s_cone, order)
    for bspec in problem.blocks:
        if bspec.psd and np.isfinite(margin):
            blocks[bspec.name] = blocks[bspec.name] \
                + margin * np.eye(bspec.dim)
    decided = max(10.0 * tol, 1e-7)
    if "solved" in status:
        if margin >= 0.0:
            return "candidate", blocks, meta
        if margin < -decided and "inaccurate" not in status:
            return "infeasible", blocks, meta
        return "inaccurate", blocks, meta
    if "infeasible" in status:
        # the margin program is infeasible only if the equalities are
        ok = _verify_farkas_ray(A, b, y, ncone, dims, order)
        certain = ok and "inaccurate" not in status
        return ("infeasible" if certain else "inaccurate"), blocks, meta
    if "unbounded" in status:
        return "inaccurate", blocks, meta
    return "failed", blocks, meta


_BACKENDS = {"clarabel": _solve_clarabel, "scs": _solve_scs}


def solve(problem, tol=DEFAULT_TOL, backend=None, max_time=None,
          relaxed_retry=True):
    """Decide feasibility of an SDPProblem; verdicts are post-verified.

    A raw "solved" becomes ``feasible`` only after the equality residual and
    block eigenvalues pass; failing that, one relaxed retry is attempted and
    the verdict degrades to ``inaccurate``. Solver crashes map to ``failed``.
    """
    # scs handles the moderate PSD cone dimensions here far better than
    # direct-KKT interior point codes, whose per-iteration cost grows with
    # the cube of the packed cone size
    from .presolve import embed, presolve

    backend = backend or os.environ.get("PIECERT_SDP_BACKEND", "scs")
    if backend not in _BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; "
                         f"choose from {sorted(_BACKENDS)}")
    t0 = time.perf_counter()
    if problem.n_rows == 0:
        blocks = {b.name: np.zeros((b.dim, b.dim)) for b in problem.blocks}
        return SDPSolution(status="feasible", blocks=blocks, max_residual=0.0,
                           backend=backend, message="empty problem")

    pre = presolve(problem)
    if pre.infeasible:
        return SDPSolution(status="infeasible", backend="presolve",
                           solve_time=time.perf_counter() - t0,
                           message=f"facial reduction: {pre.message}")
    reduced = pre.problem

    def finish_candidate(red_blocks, meta, note=""):
        blocks = embed(pre, red_blocks)
        ok, residual, min_eigs = _post_check(problem, blocks)
        return SDPSolution(
            status="feasible" if ok else "inaccurate",
            blocks=blocks, max_residual=residual, min_eigs=min_eigs,
            iterations=meta.get("iterations", 0),
            solve_time=time.perf_counter() - t0, backend=backend,
            message=("post-check passed" if ok else
                     f"post-check failed (residual {residual:.2e})") + note)

    if reduced.n_rows == 0 or len(reduced.val) == 0:
        zero = {b.name: np.zeros((b.dim, b.dim)) for b in reduced.blocks}
        hard = float(np.max(np.abs(reduced.rhs))) if reduced.n_rows else 0.0
        if hard > 1e-9:
            return SDPSolution(status="infeasible", backend="presolve",
                               solve_time=time.perf_counter() - t0,
                               message="inconsistent after facial reduction")
        return finish_candidate(zero, {}, note=" (fully presolved)")

    tols = [tol, RELAXED_TOL] if relaxed_retry and RELAXED_TOL > tol else [tol]
    last = None
    for attempt_tol in tols:
        try:
            verdict, red_blocks, meta = _BACKENDS[backend](
                reduced, attempt_tol, max_time)
        except Exception as exc:  # solver crash: diagnose, never certify
            return SDPSolution(status="failed", backend=backend,
                               solve_time=time.perf_counter() - t0,
                               message=f"{type(exc).__name__}: {exc}")
        margin = meta.get("margin", np.nan)
        if verdict == "candidate":
            last = finish_candidate(red_blocks, meta)
            if last.feasible:
                return last
        elif verdict == "infeasible":
            return SDPSolution(status="infeasible",
                               iterations=meta.get("iterations", 0),
                               solve_time=time.perf_counter() - t0,
                               backend=backend,
                               message="infeasibility certified "
                                       f"(margin {margin:.2e})")
        else:
            last = SDPSolution(status=verdict,
                               iterations=meta.get("iterations", 0),
                               solve_time=time.perf_counter() - t0,
                               backend=backend,
                               message=f"solver verdict {verdict} "
                                       f"(margin {margin:.2e})")
    return last
