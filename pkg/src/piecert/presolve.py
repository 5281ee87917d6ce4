"""Diagonal facial reduction for PSD feasibility problems.

Gram parameterizations routinely force parts of a PSD block onto a face of
the cone: an equality whose active variables are diagonal entries with
coefficients of one sign and zero right side pins those diagonals, and a
zero diagonal drags its whole row and column along. Removing these forced
zeros (and substituting single-variable rows) before handing the problem to
a first-order solver restores a strictly feasible interior whenever one
exists on the reduced face, which is the difference between hundreds and
hundreds of thousands of iterations.

The reduction is exact: ``embed`` maps any solution of the reduced problem
back to the original variables, and infeasibility discovered during the
reduction (a pinned diagonal with a negative value, or an empty row with a
nonzero right side) is a certificate for the original problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lpi import SDPBlock, SDPProblem

ZERO_TOL = 1e-11


@dataclass
class PresolveResult:
    problem: object          # reduced SDPProblem, or None when decided
    infeasible: bool
    message: str
    # reconstruction data
    fixed: dict              # global var index -> value
    keep_index: dict         # block name -> kept row indices
    col_map: np.ndarray      # original global col -> reduced col (-1 if gone)
    original: object


def _block_tables(problem):
    """Per-variable lookup: owning block, (i, j), PSD flag, diagonal flag."""
    offs, nvar = problem.var_offsets()
    owner = np.empty(nvar, dtype=np.int64)
    entry_i = np.empty(nvar, dtype=np.int64)
    entry_j = np.empty(nvar, dtype=np.int64)
    for bidx, (b, off) in enumerate(zip(problem.blocks, offs)):
        for j in range(b.dim):
            for i in range(j + 1):
                k = off + problem.tri_index(i, j)
                owner[k] = bidx
                entry_i[k] = i
                entry_j[k] = j
    return offs, owner, entry_i, entry_j


def presolve(problem, max_rounds=50):
    """Iteratively pin forced variables; returns a PresolveResult."""
    offs, owner, entry_i, entry_j = _block_tables(problem)
    nvar = len(owner)
    psd = np.array([b.psd for b in problem.blocks])

    value = np.zeros(nvar)
    fixed = np.zeros(nvar, dtype=bool)

    # adjacency: variable -> rows, row -> triplet span
    order = np.argsort(problem.row, kind="stable")
    rows_sorted = problem.row[order]
    cols_sorted = problem.col[order]
    vals_sorted = problem.val[order]
    row_starts = np.searchsorted(rows_sorted, np.arange(problem.n_rows + 1))
    rhs = problem.rhs.copy()
    row_alive = np.ones(problem.n_rows, dtype=bool)

    var_rows = [[] for _ in range(nvar)]
    for k, c in enumerate(cols_sorted):
        var_rows[c].append(k)

    def var_of(bidx, i, j):
        return offs[bidx] + problem.tri_index(min(i, j), max(i, j))

    def scale_of_row(r):
        sl = slice(row_starts[r], row_starts[r + 1])
        live = ~fixed[cols_sorted[sl]]
        mags = np.abs(vals_sorted[sl])
        return max(float(np.max(mags)) if len(mags) else 0.0, abs(rhs[r]), 1.0)

    def fix_var(k, v):
        """Pin variable k; zero PSD diagonals cascade to their row/col."""
        if fixed[k]:
            if abs(value[k] - v) > 1e-7 * max(1.0, abs(v)):
                return False  # contradictory pins
            return True
        fixed[k] = True
        value[k] = v
        b = owner[k]
        if psd[b] and entry_i[k] == entry_j[k] and abs(v) <= ZERO_TOL:
            d = problem.blocks[b].dim
            i = entry_i[k]
            for other in range(d):
                if other == i:
                    continue
                kk = var_of(b, i, other)
                if fixed[kk]:
                    if abs(value[kk]) > 1e-7:
                        return False
                else:
                    if not fix_var(kk, 0.0):
                        return False
        return True

    infeasible_msg = None
    for _ in range(max_rounds):
        changed = False
        for r in range(problem.n_rows):
            if not row_alive[r]:
                continue
            sl = slice(row_starts[r], row_starts[r + 1])
            cc = cols_sorted[sl]
            vv = vals_sorted[sl]
            live = ~fixed[cc]
            resid = rhs[r] - float(np.dot(vv[~live], value[cc[~live]]))
            cc_live, vv_live = cc[live], vv[live]
            # collapse duplicate columns within the row
            if len(cc_live) > 1:
                uq, inv = np.unique(cc_live, return_inverse=True)
                acc = np.zeros(len(uq))
                np.add.at(acc, inv, vv_live)
                keep = np.abs(acc) > ZERO_TOL * scale_of_row(r)
                cc_live, vv_live = uq[keep], acc[keep]
            scale = scale_of_row(r)
            if len(cc_live) == 0:
                row_alive[r] = False
                changed = True
                if abs(resid) > 1e-9 * scale:
                    infeasible_msg = (f"row {r} reduced to 0 = {resid:.3e}")
                    break
                continue
            if len(cc_live) == 1:
                k = int(cc_live[0])
                v = resid / float(vv_live[0])
                b = owner[k]
                diag = entry_i[k] == entry_j[k]
                if psd[b] and diag and v < -1e-9 * scale:
                    infeasible_msg = (
                        f"diagonal entry pinned to {v:.3e} < 0")
                    break
                if abs(v) <= ZERO_TOL:
                    v = 0.0
                if not fix_var(k, v):
                    infeasible_msg = "contradictory variable pins"
                    break
                row_alive[r] = False
                changed = True
                continue
            # all-diagonal same-sign homogeneous row pins everything to zero
            if abs(resid) <= 1e-11 * scale:
                diag_mask = (entry_i[cc_live] == entry_j[cc_live]) \
                    & psd[owner[cc_live]]
                if np.all(diag_mask) and (np.all(vv_live > 0)
                                          or np.all(vv_live < 0)):
                    ok = all(fix_var(int(k), 0.0) for k in cc_live)
                    if not ok:
                        infeasible_msg = "contradictory variable pins"
                        break
                    row_alive[r] = False
                    changed = True
        if infeasible_msg or not changed:
            break

    if infeasible_msg:
        return PresolveResult(problem=None, infeasible=True,
                              message=infeasible_msg, fixed={}, keep_index={},
                              col_map=np.empty(0, dtype=np.int64),
                              original=problem)

    # build the reduced problem: drop zeroed PSD rows/cols, reindex blocks
    keep_index = {}
    new_blocks = []
    for bidx, b in enumerate(problem.blocks):
        if b.psd:
            gone = set()
            for i in range(b.dim):
                k = var_of(bidx, i, i)
                if fixed[k] and abs(value[k]) <= ZERO_TOL:
                    gone.add(i)
            keep = [i for i in range(b.dim) if i not in gone]
        else:
            keep = list(range(b.dim))
        keep_index[b.name] = keep
        new_blocks.append(SDPBlock(b.name, len(keep), b.psd))

    col_map = np.full(nvar, -1, dtype=np.int64)
    new_offs = []
    acc = 0
    for b in new_blocks:
        new_offs.append(acc)
        acc += b.dim * (b.dim + 1) // 2
    for bidx, (b, off) in enumerate(zip(problem.blocks, offs)):
        keep = keep_index[b.name]
        pos = {i: p for p, i in enumerate(keep)}
        for j in range(b.dim):
            for i in range(j + 1):
                k = off + problem.tri_index(i, j)
                if fixed[k]:
                    continue
                if i in pos and j in pos:
                    col_map[k] = new_offs[bidx] + \
                        problem.tri_index(pos[i], pos[j])

    live_rows = np.where(row_alive)[0]
    row_renum = np.full(problem.n_rows, -1, dtype=np.int64)
    row_renum[live_rows] = np.arange(len(live_rows))
    new_rhs = rhs[live_rows].copy()

    keep_trip = row_alive[problem.row] & ~fixed[problem.col]
    # subtract fixed-variable contributions from the right-hand side
    drop_trip = row_alive[problem.row] & fixed[problem.col]
    if np.any(drop_trip):
        contrib = problem.val[drop_trip] * value[problem.col[drop_trip]]
        np.subtract.at(new_rhs, row_renum[problem.row[drop_trip]], contrib)

    new_row = row_renum[problem.row[keep_trip]]
    new_col = col_map[problem.col[keep_trip]]
    new_val = problem.val[keep_trip].copy()
    if np.any(new_col < 0):
        raise AssertionError("unfixed variable lost its column")

    reduced = SDPProblem(blocks=new_blocks, row=new_row, col=new_col,
                         val=new_val, rhs=new_rhs, spans={})
    fixed_map = {int(k): float(value[k]) for k in np.where(fixed)[0]}
    return PresolveResult(problem=reduced, infeasible=False, message="",
                          fixed=fixed_map, keep_index=keep_index,
                          col_map=col_map, original=problem)


def embed(result, reduced_blocks):
    """Lift reduced-problem block matrices back to the original shapes."""
    problem = result.original
    offs, _ = problem.var_offsets()
    out = {}
    for b, off in zip(problem.blocks, offs):
        M = np.zeros((b.dim, b.dim))
        keep = result.keep_index[b.name]
        R = reduced_blocks[b.name]
        for pj, j in enumerate(keep):
            for pi, i in enumerate(keep[:pj + 1]):
                M[i, j] = R[pi, pj]
                M[j, i] = R[pi, pj]
        for j in range(b.dim):
            for i in range(j + 1):
                k = off + problem.tri_index(i, j)
                if k in result.fixed:
                    M[i, j] = result.fixed[k]
                    M[j, i] = result.fixed[k]
        out[b.name] = M
    return out
