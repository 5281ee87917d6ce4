"""The *-algebra of 3-part partial integral operators on L2^n[a, b].

An operator here acts as

    (P v)(s) = P0(s) v(s) + int_a^s P1(s, th) v(th) dth
                          + int_s^b P2(s, th) v(th) dth

with polynomial multiplier P0 and polynomial kernels P1 (lower) and P2
(upper). The class is closed under addition, composition and adjoint; the
composition formulae are derived by exchanging the order of integration and
are gated in the tests by a quadrature equivalence check.
"""

from __future__ import annotations

import numpy as np

from .polynomials import (EQUAL_TOL, MatrixPolynomial, ShapeMismatchError)
from .quadrature import DEFAULT_PANELS, panel_nodes


class PIOperator:
    __slots__ = ("P0", "P1", "P2")

    def __init__(self, P0, P1, P2):
        if P0.shape != P1.shape or P0.shape != P2.shape:
            raise ShapeMismatchError(
                f"parts disagree: {P0.shape}, {P1.shape}, {P2.shape}")
        if not (P0.domain == P1.domain == P2.domain):
            raise ShapeMismatchError("parts live on different domains")
        if P0.deg_th() > 0:
            raise ValueError("multiplier must not depend on th")
        self.P0 = P0
        self.P1 = P1
        self.P2 = P2

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_parts(cls, dim_out, dim_in, domain, P0=None, P1=None, P2=None):
        P0 = P0 if P0 is not None else MatrixPolynomial.zeros(dim_out, dim_in, domain)
        P1 = P1 if P1 is not None else MatrixPolynomial.zeros(dim_out, dim_in, domain, True)
        P2 = P2 if P2 is not None else MatrixPolynomial.zeros(dim_out, dim_in, domain, True)
        return cls(P0, P1, P2)

    @classmethod
    def zero(cls, dim_out, dim_in, domain):
        return cls.from_parts(dim_out, dim_in, domain)

    @classmethod
    def identity(cls, n, domain):
        return cls.from_parts(n, n, domain,
                              P0=MatrixPolynomial.identity(n, domain))

    @classmethod
    def multiplier(cls, poly):
        return cls.from_parts(poly.rows, poly.cols, poly.domain, P0=poly)

    # -- bookkeeping ----------------------------------------------------------

    @property
    def dim_out(self):
        return self.P0.rows

    @property
    def dim_in(self):
        return self.P0.cols

    @property
    def domain(self):
        return self.P0.domain

    def is_zero(self, tol=0.0):
        return (self.P0.is_zero(tol) and self.P1.is_zero(tol)
                and self.P2.is_zero(tol))

    def max_abs_coeff(self):
        return max(self.P0.max_abs_coeff(), self.P1.max_abs_coeff(),
                   self.P2.max_abs_coeff())

    def equals(self, other, tol=EQUAL_TOL):
        scale = max(self.max_abs_coeff(), other.max_abs_coeff())
        if scale == 0.0:
            return True
        diff = self - other
        return diff.max_abs_coeff() <= tol * scale

    def __repr__(self):
        return (f"PIOperator({self.dim_out}x{self.dim_in} on {self.domain}, "
                f"deg P0={self.P0.deg_s()}, "
                f"P1=({self.P1.deg_s()},{self.P1.deg_th()}), "
                f"P2=({self.P2.deg_s()},{self.P2.deg_th()}))")

    # -- linear structure -------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, PIOperator):
            return NotImplemented
        return PIOperator(self.P0 + other.P0, self.P1 + other.P1,
                          self.P2 + other.P2)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c):
        return PIOperator(self.P0.scale(c), self.P1.scale(c), self.P2.scale(c))

    def __mul__(self, c):
        if isinstance(c, (int, float)):
            return self.scale(c)
        return NotImplemented

    __rmul__ = __mul__

    def select_rows(self, idx):
        cols = range(self.dim_in)
        return PIOperator(self.P0.submatrix(idx, cols),
                          self.P1.submatrix(idx, cols),
                          self.P2.submatrix(idx, cols))

    # -- algebra -----------------------------------------------------------------

    def adjoint(self):
        """L2 adjoint: transpose the multiplier, reflect and swap the kernels."""
        return PIOperator(self.P0.transpose(),
                          self.P2.swap_vars().transpose(),
                          self.P1.swap_vars().transpose())

    def compose(self, other):
        """Operator composition self o other, exact on the kernel level.

        The kernel-kernel products split the middle integral at the output
        and input variables, producing five definite integrals per kernel.
        """
        if not isinstance(other, PIOperator):
            raise TypeError("compose expects a PIOperator")
        if self.dim_in != other.dim_out:
            raise ShapeMismatchError(
                f"inner dimensions {self.dim_in} != {other.dim_out}")
        self.P0._require_same_grid(other.P0)
        p0, p1, p2 = self.P0, self.P1, self.P2
        q0, q1, q2 = other.P0, other.P1, other.P2
        q0t = q0.as_second_variable()

        R0 = p0 @ q0
        R1 = (p0 @ q1) + (p1 @ q0t) \
            + _kernel_integral(p1, q1, "nu", "s") \
            + _kernel_integral(p1, q2, "a", "nu") \
            + _kernel_integral(p2, q1, "s", "b")
        R2 = (p0 @ q2) + (p2 @ q0t) \
            + _kernel_integral(p2, q1, "nu", "b") \
            + _kernel_integral(p2, q2, "s", "nu") \
            + _kernel_integral(p1, q2, "a", "s")
        return PIOperator(R0, R1, R2)

    def __matmul__(self, other):
        if isinstance(other, PIOperator):
            return self.compose(other)
        return NotImplemented

    def mult_left(self, poly):
        """Left-multiply all parts by a polynomial matrix in s."""
        if poly.cols != self.dim_out:
            raise ShapeMismatchError(
                f"multiplier cols {poly.cols} != operator rows {self.dim_out}")
        return PIOperator(poly @ self.P0, poly @ self.P1, poly @ self.P2)

    def diff_compose(self, order=1):
        """Spatial differentiation after application: d^k/ds^k o P.

        One step turns the kernel jump P1(s,s) - P2(s,s) into a multiplier
        and differentiates the kernels (Leibniz). A nonzero multiplier is
        differentiated as a plain polynomial; rows where that drops the
        v'(s) term are exactly the rows a valid model never selects.
        """
        op = self
        for _ in range(order):
            P0 = op.P0.differentiate_s(1) \
                + op.P1.diagonal_restriction() \
                - op.P2.diagonal_restriction()
            op = PIOperator(P0, op.P1.differentiate_s(1),
                            op.P2.differentiate_s(1))
        return op

    # -- numerics ------------------------------------------------------------------

    def apply_numeric(self, v, s_points, panels=DEFAULT_PANELS):
        """Quadrature evaluation of (P v) at the given points.

        ``v`` is a callable returning a scalar or a length dim_in vector.
        Composite Gauss-Legendre panels are placed separately on [a, s] and
        [s, b], so polynomial integrands are integrated exactly.
        """
        a, b = self.domain
        s_points = np.atleast_1d(np.asarray(s_points, dtype=float))
        out = np.zeros((len(s_points), self.dim_out))

        def vval(th):
            arr = np.atleast_1d(np.asarray(v(th), dtype=float))
            if arr.shape != (self.dim_in,):
                raise ShapeMismatchError(
                    f"v(th) has shape {arr.shape}, expected ({self.dim_in},)")
            return arr

        for idx, s in enumerate(s_points):
            acc = self.P0.evaluate(s) @ vval(s)
            for kernel, lo, hi in ((self.P1, a, s), (self.P2, s, b)):
                nodes, weights = panel_nodes(lo, hi, panels)
                if len(nodes) == 0 or kernel.is_zero():
                    continue
                ker_at_s = kernel.eval_s(s)
                kmats = ker_at_s.eval_theta_grid(nodes)
                vmat = np.stack([vval(t) for t in nodes])
                acc = acc + np.einsum("k,kij,kj->i", weights, kmats, vmat)
            out[idx] = acc
        return out

    def to_matrix(self, nodes, weights):
        """Nodal collocation matrix on a quadrature grid (method of lines).

        The kernel jump inside the panel containing each node is ignored, so
        this is only panel-width accurate; use apply_numeric for precision.
        """
        n, m = self.dim_out, self.dim_in
        N = len(nodes)
        out = np.zeros((N * n, N * m))
        for i, s in enumerate(nodes):
            out[i * n:(i + 1) * n, i * m:(i + 1) * m] += self.P0.evaluate(s)
            p1s = self.P1.eval_s(s)
            p2s = self.P2.eval_s(s)
            k1 = p1s.eval_theta_grid(nodes)
            k2 = p2s.eval_theta_grid(nodes)
            for j, (t, w) in enumerate(zip(nodes, weights)):
                kmat = k1[j] if t <= s else k2[j]
                out[i * n:(i + 1) * n, j * m:(j + 1) * m] += w * kmat
        return out

    def norm_upper_bound(self, grid_points=201, inflation=1.05):
        """Upper bound on the induced L2 operator norm.

        Multiplier: max singular value sampled on a uniform grid, inflated;
        kernels: exact Hilbert-Schmidt norms over their triangles.
        """
        a, b = self.domain
        mult = 0.0
        if not self.P0.is_zero():
            for s in np.linspace(a, b, grid_points):
                mult = max(mult, float(np.linalg.norm(self.P0.evaluate(s), 2)))
        hs1 = self.P1.frobenius_square().integrate_theta("a", "s")
        hs2 = self.P2.frobenius_square().integrate_theta("s", "b")
        hs1val = float(hs1.integrate_s_interval()[0, 0])
        hs2val = float(hs2.integrate_s_interval()[0, 0])
        return (inflation * mult + np.sqrt(max(hs1val, 0.0))
                + np.sqrt(max(hs2val, 0.0)))


def _kernel_integral(p, q, lower, upper):
    """int p(s, th) q(th, nu) dth with limits among a, b, s, nu.

    Works monomial-by-monomial: the th-antiderivative exponent lands on s,
    on nu, or becomes a constant, depending on the limit. The result is a
    kernel in (s, nu), stored in the usual (s, th) slots.
    """
    if p.cols != q.rows:
        raise ShapeMismatchError(f"inner dimensions {p.cols} != {q.rows}")
    a, b = p.domain
    consts = {"a": a, "b": b}
    coeffs = {}

    def accumulate(key, mat):
        if key in coeffs:
            coeffs[key] = coeffs[key] + mat
        else:
            coeffs[key] = mat

    for (i1, j1), m1 in p.coeffs.items():
        for (i2, j2), m2 in q.coeffs.items():
            mat = m1 @ m2
            mexp = j1 + i2
            inv = 1.0 / (mexp + 1)
            for limit, sign in ((upper, 1.0), (lower, -1.0)):
                if limit == "s":
                    accumulate((i1 + mexp + 1, j2), sign * inv * mat)
                elif limit == "nu":
                    accumulate((i1, j2 + mexp + 1), sign * inv * mat)
                else:
                    c = consts[limit] ** (mexp + 1)
                    if c != 0.0:
                        accumulate((i1, j2), sign * c * inv * mat)
    return MatrixPolynomial(p.rows, q.cols, coeffs, p.domain, True)


def vstack(ops):
    """Stack operators that share an input space by rows."""
    if not ops:
        raise ValueError("nothing to stack")
    dim_in = ops[0].dim_in
    domain = ops[0].domain
    total = sum(op.dim_out for op in ops)
    parts = []
    for which in ("P0", "P1", "P2"):
        coeffs = {}
        offset = 0
        for op in ops:
            poly = getattr(op, which)
            for key, m in poly.coeffs.items():
                if key not in coeffs:
                    coeffs[key] = np.zeros((total, dim_in))
                coeffs[key][offset:offset + op.dim_out, :] += m
            offset += op.dim_out
        parts.append(MatrixPolynomial(total, dim_in, coeffs, domain,
                                      bivariate=which != "P0"))
    return PIOperator(*parts)
