"""Assembly of the three operator inequalities as a semidefinite program.

For a fixed growth rate omega and shift lambda > omega, feasibility of

    (1)  P >= eps1^2 I            (coercivity of the weight)
    (2)  T*PA + A*PT <= 2 omega T*PT      (weighted dissipation)
    (3)  (lambda T - A)(lambda T* - A*) >= eps2^2 I   (surjectivity)

over a lifted operator variable P certifies semigroup generation. The
weight is parameterized as P = eps1^2 I + Theta* Ma Theta with Ma PSD, which
makes (1) hold by construction; (2) and (3) are rewritten as operator
identities against fresh positive lifted variables Mb and Mc and matched
coefficient by coefficient, yielding linear equalities over PSD blocks.

Compilation is omega/lambda independent; ``CompiledLPI.instantiate``
produces a concrete ``SDPProblem`` per probe, which makes bisection cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import PIOperator
from .polynomials import MatrixPolynomial
from .lifting import PosOpParam, pair_contributions, realize

CONSTRAINT_NAMES = ("coercivity", "dissipation", "surjectivity")


# -- affine operator expressions ------------------------------------------------

class OperatorExpr:
    """A PI operator whose coefficients are affine in scalar decision variables.

    Slots are (part, row, col, s_exp, th_exp); variables are (block, p, q)
    entries of symmetric matrices with p <= q (the folded coefficient already
    accounts for both symmetric positions).
    """

    def __init__(self, dim_out, dim_in, domain):
        self.dim_out = dim_out
        self.dim_in = dim_in
        self.domain = domain
        self.lin = {}    # slot -> {(block, p, q): coeff}
        self.const = {}  # slot -> float

    def slots(self):
        return set(self.lin) | set(self.const)

    def max_degree(self):
        out = 0
        for (_, _, _, es, et) in self.slots():
            out = max(out, es, et)
        return out

    def add_lin(self, slot, var, coeff):
        if coeff == 0.0:
            return
        entry = self.lin.setdefault(slot, {})
        entry[var] = entry.get(var, 0.0) + coeff

    def add_const_operator(self, op, scale=1.0):
        for part, poly in enumerate((op.P0, op.P1, op.P2)):
            for (es, et), mat in poly.coeffs.items():
                for i in range(poly.rows):
                    for j in range(poly.cols):
                        v = scale * mat[i, j]
                        if v != 0.0:
                            slot = (part, i, j, es, et)
                            self.const[slot] = self.const.get(slot, 0.0) + v
        return self

    def add_expr(self, other, scale=1.0):
        for slot, entry in other.lin.items():
            for var, c in entry.items():
                self.add_lin(slot, var, scale * c)
        for slot, c in other.const.items():
            self.const[slot] = self.const.get(slot, 0.0) + scale * c
        return self

    def scaled(self, scale):
        out = OperatorExpr(self.dim_out, self.dim_in, self.domain)
        out.add_expr(self, scale)
        return out

    def adjoint(self):
        out = OperatorExpr(self.dim_in, self.dim_out, self.domain)
        for slot, entry in self.lin.items():
            aslot = _adjoint_slot(slot)
            for var, c in entry.items():
                out.add_lin(aslot, var, c)
        for slot, c in self.const.items():
            aslot = _adjoint_slot(slot)
            out.const[aslot] = out.const.get(aslot, 0.0) + c
        return out

    def compose_fixed(self, left=None, right=None):
        """left o self o right for fixed operators, by probing basis slots.

        Composition with fixed operands is linear in this expression's
        coefficients, so each occupied slot is pushed through the numeric
        composition once and the results are recombined.
        """
        dim_out = left.dim_out if left is not None else self.dim_out
        dim_in = right.dim_in if right is not None else self.dim_in
        out = OperatorExpr(dim_out, dim_in, self.domain)
        cache = {}
        for slot in self.slots():
            cache[slot] = _probe_slot(slot, self.dim_out, self.dim_in,
                                      self.domain, left, right)
        for slot, entry in self.lin.items():
            for oslot, pc in cache[slot]:
                for var, c in entry.items():
                    out.add_lin(oslot, var, pc * c)
        for slot, c in self.const.items():
            for oslot, pc in cache[slot]:
                out.const[oslot] = out.const.get(oslot, 0.0) + pc * c
        return out

    def realize(self, values):
        """Numeric PIOperator given per-block symmetric matrices."""
        parts = {0: {}, 1: {}, 2: {}}

        def put(slot, v):
            part, i, j, es, et = slot
            mat = parts[part].setdefault(
                (es, et), np.zeros((self.dim_out, self.dim_in)))
            mat[i, j] += v

        for slot, entry in self.lin.items():
            total = 0.0
            for (block, p, q), c in entry.items():
                total += c * values[block][p, q]
            put(slot, total)
        for slot, c in self.const.items():
            put(slot, c)
        return PIOperator(
            MatrixPolynomial(self.dim_out, self.dim_in, parts[0], self.domain),
            MatrixPolynomial(self.dim_out, self.dim_in, parts[1], self.domain, True),
            MatrixPolynomial(self.dim_out, self.dim_in, parts[2], self.domain, True))


def _adjoint_slot(slot):
    part, i, j, es, et = slot
    if part == 0:
        return (0, j, i, es, et)
    if part == 1:
        return (2, j, i, et, es)
    return (1, j, i, et, es)


def _probe_slot(slot, dim_out, dim_in, domain, left, right):
    part, i, j, es, et = slot
    mat = np.zeros((dim_out, dim_in))
    mat[i, j] = 1.0
    poly = MatrixPolynomial(dim_out, dim_in, {(es, et): mat}, domain,
                            bivariate=part != 0)
    kwargs = {("P0", "P1", "P2")[part]: poly}
    probe = PIOperator.from_parts(dim_out, dim_in, domain, **kwargs)
    if left is not None:
        probe = left @ probe
    if right is not None:
        probe = probe @ right
    out = []
    for p_idx, p_poly in enumerate((probe.P0, probe.P1, probe.P2)):
        for (oes, oet), m in p_poly.coeffs.items():
            nz = np.nonzero(m)
            for r, c in zip(*nz):
                out.append(((p_idx, int(r), int(c), oes, oet), float(m[r, c])))
    return out


def realize_expr(param, block):
    """The lifted-variable realization Theta* M Theta as an OperatorExpr."""
    n = param.n
    expr = OperatorExpr(n, n, param.domain)
    for bk, k, bl, l, part, exp, scale in pair_contributions(param):
        for i in range(n):
            for j in range(n):
                p = param.var_index(bk, k, i)
                q = param.var_index(bl, l, j)
                var = (block, p, q) if p <= q else (block, q, p)
                expr.add_lin((part, i, j, exp[0], exp[1]), var, scale)
    return expr


# -- the semidefinite problem container ----------------------------------------

@dataclass(frozen=True)
class SDPBlock:
    name: str
    dim: int
    psd: bool


@dataclass
class SDPProblem:
    """PSD feasibility with linear equality rows in sparse triplet form.

    Each equality row reads  sum_k value_k * M_{block_k}[i_k, j_k] = rhs_row
    over symmetric blocks (entries (i, j) and (j, i) are the same variable;
    triplets always carry i <= j and the value already folds both positions).
    """
    blocks: list
    row: np.ndarray     # equality row index per triplet
    col: np.ndarray     # global column index (see var_offsets) per triplet
    val: np.ndarray
    rhs: np.ndarray
    spans: dict = field(default_factory=dict)  # constraint name -> (lo, hi)

    @property
    def n_rows(self):
        return len(self.rhs)

    def var_offsets(self):
        offs, acc = [], 0
        for b in self.blocks:
            offs.append(acc)
            acc += b.dim * (b.dim + 1) // 2
        return offs, acc

    @staticmethod
    def tri_index(i, j):
        # column-major upper triangle: (0,0), (0,1), (1,1), (0,2), ...
        return j * (j + 1) // 2 + i

    @staticmethod
    def tri_unindex(k):
        j = int((math.isqrt(8 * k + 1) - 1) // 2)
        return k - j * (j + 1) // 2, j

    def iter_triplets(self):
        """Yield (row, block_name, i, j, value) in the documented form."""
        offs, _ = self.var_offsets()
        bounds = offs + [None]
        for r, c, v in zip(self.row, self.col, self.val):
            bidx = np.searchsorted(offs, c, side="right") - 1
            i, j = self.tri_unindex(int(c) - offs[bidx])
            yield int(r), self.blocks[bidx].name, i, j, float(v)

    def residuals(self, values):
        """Max equality violation for per-block symmetric matrices."""
        offs, total = self.var_offsets()
        x = np.zeros(total)
        for b, off in zip(self.blocks, offs):
            M = values[b.name]
            for j in range(b.dim):
                for i in range(j + 1):
                    x[off + self.tri_index(i, j)] = M[i, j]
        lhs = np.zeros(self.n_rows)
        np.add.at(lhs, self.row, self.val * x[self.col])
        if self.n_rows == 0:
            return 0.0
        return float(np.max(np.abs(lhs - self.rhs)))


# -- compilation -----------------------------------------------------------------

def _theta_degree(max_lhs_degree):
    return max_lhs_degree // 2 + 1


@dataclass
class CompiledLPI:
    """All omega/lambda-independent assembly work for one PIE and degree."""
    pie: object
    deg: int
    eps1: float
    eps2: float
    kernel_basis: str
    plan: dict
    params: dict
    blocks: list
    # static triplet arrays per constraint plus the omega-scaled part
    _rows: dict = field(default_factory=dict)

    def instantiate(self, omega, lam):
        if not lam > omega:
            raise ValueError(f"need lambda > omega, got {lam} <= {omega}")
        r = self._rows
        rows = [r["static_row"], r["phi_row"]]
        cols = [r["static_col"], r["phi_col"]]
        vals = [r["static_val"], 2.0 * omega * r["phi_val"]]
        rhs = r["rhs_base"].copy()
        lo, hi = r["spans"]["dissipation"]
        rhs[lo:hi] -= 2.0 * omega * r["phi_const"]
        lo, hi = r["spans"]["surjectivity"]
        rhs[lo:hi] = (lam ** 2) * r["surj_r2"] - lam * r["surj_r1"] \
            + r["surj_r0"] - self.eps2 ** 2 * r["surj_rI"]
        return SDPProblem(
            blocks=self.blocks,
            row=np.concatenate(rows),
            col=np.concatenate(cols),
            val=np.concatenate(vals),
            rhs=rhs,
            spans=dict(r["spans"]))

    def realize_P(self, values):
        """The weight operator P = eps1^2 I + Theta* Ma Theta of a solution."""
        R = realize(self.params["Ma"], values["Ma"])
        n = R.dim_out
        return R + PIOperator.identity(n, R.domain).scale(self.eps1 ** 2)


def compile_lpi(pie, deg, eps1=0.1, eps2=0.1, kernel_basis="sep",
                fixed_P=None):
    """Build the omega-parametric equality systems for one PIE and degree.

    The coercivity constraint is enforced definitionally: the weight is
    parameterized as P = eps1^2 I + Theta* Ma Theta with Ma in the PSD cone,
    so P >= eps1^2 I holds for every feasible point and the multiplier of P
    carries monomials of degree at most 2*deg. With ``fixed_P`` the weight
    is pinned to a given operator instead (used to re-verify a certificate
    against a canonical weight); the Ma block is then absent.
    """
    if eps1 <= 0 or eps2 <= 0:
        raise ValueError("eps1 and eps2 must be positive")
    T, A = pie.T, pie.A
    n = T.dim_out
    domain = T.domain
    Tstar = T.adjoint()
    Astar = A.adjoint()
    ident = PIOperator.identity(n, domain)

    params = {}
    W_P = OperatorExpr(n, n, domain)
    if fixed_P is None:
        param_P = PosOpParam(n, deg, domain, kernel_basis)
        params["Ma"] = param_P
        W_P.add_expr(realize_expr(param_P, "Ma"))
        W_P.add_const_operator(ident, eps1 ** 2)
    else:
        W_P.add_const_operator(fixed_P)

    psi = W_P.compose_fixed(left=Tstar, right=A)
    psi_sym = psi.scaled(1.0).add_expr(psi.adjoint())
    phi = W_P.compose_fixed(left=Tstar, right=T)

    # the dissipation left side is integral-only: T and T* kill multipliers
    # through composition on either side
    for expr in (phi, psi_sym):
        for slot in expr.slots():
            if slot[0] == 0:
                raise AssertionError(
                    "dissipation constraint grew a multiplier part")

    deg_b = _theta_degree(max(phi.max_degree(), psi_sym.max_degree()))
    TTs = T @ Tstar
    cross = (T @ Astar) + (A @ Tstar)
    AAs = A @ Astar
    deg_c = _theta_degree(max(
        TTs.P0.deg_s(), TTs.P1.deg_s(), TTs.P1.deg_th(),
        TTs.P2.deg_s(), TTs.P2.deg_th(),
        cross.P0.deg_s(), cross.P1.deg_s(), cross.P1.deg_th(),
        cross.P2.deg_s(), cross.P2.deg_th(),
        AAs.P0.deg_s(), AAs.P1.deg_s(), AAs.P1.deg_th(),
        AAs.P2.deg_s(), AAs.P2.deg_th()))
    plan = {"P": deg, "dissipation": deg_b, "surjectivity": deg_c}

    params["Mb"] = PosOpParam(n, deg_b, domain, kernel_basis,
                              multiplier_block=False)
    params["Mc"] = PosOpParam(n, deg_c, domain, kernel_basis)
    W_b = realize_expr(params["Mb"], "Mb")
    W_c = realize_expr(params["Mc"], "Mc")

    blocks = []
    if fixed_P is None:
        blocks.append(SDPBlock("Ma", params["Ma"].dim, psd=True))
    blocks.extend([SDPBlock("Mb", params["Mb"].dim, psd=True),
                   SDPBlock("Mc", params["Mc"].dim, psd=True)])
    block_index = {b.name: k for k, b in enumerate(blocks)}
    offs = []
    acc = 0
    for b in blocks:
        offs.append(acc)
        acc += b.dim * (b.dim + 1) // 2

    def gcol(var):
        block, p, q = var
        return offs[block_index[block]] + SDPProblem.tri_index(p, q)

    ident_slots = {(0, i, i, 0, 0) for i in range(n)}

    static_r, static_c, static_v = [], [], []
    phi_r, phi_c, phi_v = [], [], []
    rhs = []
    spans = {}
    row_counter = 0

    def emit(expr_terms, slot_rows):
        # expr_terms: list of (OperatorExpr, scale); appends static triplets
        # using the slot_rows mapping
        for expr, scale in expr_terms:
            for slot, entry in expr.lin.items():
                r = slot_rows[slot]
                for var, c in entry.items():
                    static_r.append(r)
                    static_c.append(gcol(var))
                    static_v.append(scale * c)

    # constraint 2: 2 omega T*PT - T*PA - A*PT = Theta_b* Mb Theta_b
    slots = sorted(set(phi.lin) | set(phi.const) | set(psi_sym.lin)
                   | set(psi_sym.const) | set(W_b.lin))
    slot_rows = {s: row_counter + k for k, s in enumerate(slots)}
    emit([(psi_sym, -1.0), (W_b, -1.0)], slot_rows)
    for slot, entry in phi.lin.items():
        r = slot_rows[slot]
        for var, c in entry.items():
            phi_r.append(r)
            phi_c.append(gcol(var))
            phi_v.append(c)
    for s in slots:
        # psi's constant part moves to the right-hand side; the omega-scaled
        # phi constant joins it at instantiation (both arise only when the
        # weight is fixed rather than a decision block)
        rhs.append(psi_sym.const.get(s, 0.0))
    phi_const = np.zeros(len(slots))
    for k, s in enumerate(slots):
        phi_const[k] = phi.const.get(s, 0.0)
    spans["dissipation"] = (row_counter, row_counter + len(slots))
    row_counter += len(slots)

    # constraint 3: (lam T - A)(lam T* - A*) - eps2^2 I = Theta_c* Mc Theta_c
    fixed_exprs = {}
    for name, op in (("r2", TTs), ("r1", cross), ("r0", AAs)):
        fixed_exprs[name] = OperatorExpr(n, n, domain).add_const_operator(op)
    slots = sorted(set(W_c.lin) | ident_slots
                   | set(fixed_exprs["r2"].const)
                   | set(fixed_exprs["r1"].const)
                   | set(fixed_exprs["r0"].const))
    slot_rows = {s: row_counter + k for k, s in enumerate(slots)}
    emit([(W_c, 1.0)], slot_rows)
    surj = {}
    for name in ("r2", "r1", "r0"):
        vec = np.zeros(len(slots))
        for k, s in enumerate(slots):
            vec[k] = fixed_exprs[name].const.get(s, 0.0)
        surj[name] = vec
    surj_I = np.zeros(len(slots))
    for k, s in enumerate(slots):
        if s in ident_slots:
            surj_I[k] = 1.0
    rhs.extend([0.0] * len(slots))
    spans["surjectivity"] = (row_counter, row_counter + len(slots))
    row_counter += len(slots)

    rows = {
        "static_row": np.asarray(static_r, dtype=np.int64),
        "static_col": np.asarray(static_c, dtype=np.int64),
        "static_val": np.asarray(static_v, dtype=float),
        "phi_row": np.asarray(phi_r, dtype=np.int64),
        "phi_col": np.asarray(phi_c, dtype=np.int64),
        "phi_val": np.asarray(phi_v, dtype=float),
        "rhs_base": np.asarray(rhs, dtype=float),
        "phi_const": phi_const,
        "surj_r2": surj["r2"],
        "surj_r1": surj["r1"],
        "surj_r0": surj["r0"],
        "surj_rI": surj_I,
        "spans": spans,
    }
    return CompiledLPI(pie=pie, deg=deg, eps1=eps1, eps2=eps2,
                       kernel_basis=kernel_basis, plan=plan, params=params,
                       blocks=blocks, _rows=rows)


def degree_plan(pie, deg, kernel_basis="sep"):
    """Lifting degrees chosen per constraint from the actual left sides."""
    return compile_lpi(pie, deg, kernel_basis=kernel_basis).plan


def assemble(pie, omega, lam, eps1=0.1, eps2=0.1, deg=1, kernel_basis="sep"):
    """One-shot assembly of the feasibility program at fixed omega, lambda."""
    return compile_lpi(pie, deg, eps1=eps1, eps2=eps2,
                       kernel_basis=kernel_basis).instantiate(omega, lam)
