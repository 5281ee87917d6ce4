"""Convert a boundary-value PDE model into its partial integral form {T, A}.

T is the integral right-inverse of the per-component spatial derivative
d^{d_i}/ds^{d_i} on the boundary-condition subspace; its kernel is the
Green's function of the boundary value problem, built here by variation of
constants: write each component as a polynomial core plus a repeated
integral of the fundamental state, substitute into the boundary rows, and
solve the square system for the core coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polynomials import MatrixPolynomial, build_Q
from .operators import PIOperator


class InvalidModelError(ValueError):
    """The model is structurally malformed (before any numerics)."""


class IncompatibleDomainError(RuntimeError):
    """The boundary-condition system is singular; no integral inverse exists."""

    def __init__(self, K, cond):
        self.K = K
        self.cond = cond
        super().__init__(
            f"boundary system is numerically singular (cond ~ {cond:.3e}); "
            "certification refused")


@dataclass(frozen=True)
class BCTerm:
    """One term  coeff * d^j u_i(endpoint)  of a boundary row."""
    component: int
    derivative: int
    endpoint: str  # "a" or "b"
    coeff: float = 1.0


@dataclass(frozen=True)
class BoundaryCoupling:
    """A dynamics term  column(s) * d^j u_i(endpoint)  (boundary feedback)."""
    column: MatrixPolynomial  # n x 1, in s
    component: int
    derivative: int
    endpoint: str


@dataclass
class PDEModel:
    """State dimension, per-component orders, coefficients and boundary data.

    ``coeffs`` lists (k, A_k) pairs for the dynamics sum_k A_k(s) d^k u;
    nonzero columns of A_k may only touch components with order >= k.
    """
    orders: tuple
    domain: tuple
    coeffs: list  # [(k, MatrixPolynomial n x n in s)]
    bcs: list     # [[BCTerm, ...], ...]
    couplings: list = field(default_factory=list)

    def __post_init__(self):
        self.orders = tuple(int(d) for d in self.orders)
        self.validate()

    @property
    def n(self):
        return len(self.orders)

    @property
    def n_core(self):
        return sum(self.orders)

    def offsets(self):
        out, acc = [], 0
        for d in self.orders:
            out.append(acc)
            acc += d
        return out

    def validate(self):
        n = self.n
        if n == 0:
            raise InvalidModelError("empty state")
        for i, d in enumerate(self.orders):
            if d < 1:
                raise InvalidModelError(
                    f"component {i} has order {d}; orders must be >= 1")
        if len(self.bcs) != self.n_core:
            raise InvalidModelError(
                f"{len(self.bcs)} boundary rows for {self.n_core} core "
                "coefficients; the boundary system must be square")
        for k, poly in self.coeffs:
            if poly.shape != (n, n):
                raise InvalidModelError(
                    f"A_{k} has shape {poly.shape}, expected {(n, n)}")
            if k < 0 or k > max(self.orders):
                raise InvalidModelError(f"derivative order {k} out of range")
            for col in range(n):
                if k > self.orders[col]:
                    col_max = max(
                        (float(np.max(np.abs(m[:, col])))
                         for m in poly.coeffs.values()), default=0.0)
                    if col_max > 0.0:
                        raise InvalidModelError(
                            f"A_{k} column {col} exceeds order "
                            f"{self.orders[col]} of that component")
        for row in self.bcs:
            for t in row:
                self._check_trace(t.component, t.derivative, t.endpoint)
        for c in self.couplings:
            self._check_trace(c.component, c.derivative, c.endpoint)
            if c.column.shape != (n, 1):
                raise InvalidModelError(
                    f"coupling column has shape {c.column.shape}, "
                    f"expected {(n, 1)}")

    def _check_trace(self, i, j, e):
        if not (0 <= i < self.n):
            raise InvalidModelError(f"component {i} out of range")
        if e not in ("a", "b"):
            raise InvalidModelError(f"endpoint {e!r} must be 'a' or 'b'")
        if not (0 <= j <= self.orders[i] - 1):
            raise InvalidModelError(
                f"derivative {j} of component {i} is not a bounded boundary "
                f"functional (order {self.orders[i]})")


@dataclass
class CompatibilityReport:
    compatible: bool
    K: np.ndarray
    cond: float
    sigma_min: float
    sigma_max: float


@dataclass
class PIESystem:
    """The operator pair {T, A} equivalent to the PDE, plus diagnostics."""
    T: PIOperator
    A: PIOperator
    model: PDEModel
    K: np.ndarray
    cond: float


def boundary_system(model):
    """The square matrix K and integral right-hand side of the boundary rows.

    Row r of the boundary conditions reads  K[r] . c + int_a^b F[r](th) v(th)
    dth = 0, where c stacks the polynomial-core coefficients c_{i,k}
    (component-major) and F is a matrix of polynomials in th.
    """
    a, b = model.domain
    offs = model.offsets()
    nc = model.n_core
    K = np.zeros((nc, nc))
    F = {}  # (row, src_component) -> {th_exp: value}

    for r, row in enumerate(model.bcs):
        for t in row:
            i, j, w = t.component, t.derivative, float(t.coeff)
            d = model.orders[i]
            if t.endpoint == "a":
                K[r, offs[i] + j] += w
            else:
                for k in range(j, d):
                    K[r, offs[i] + k] += \
                        w * (b - a) ** (k - j) / math.factorial(k - j)
                m = d - 1 - j
                entry = F.setdefault((r, i), {})
                # (b - th)^m expansion
                for l in range(m + 1):
                    entry[l] = entry.get(l, 0.0) + \
                        w * math.comb(m, l) * (b ** (m - l)) * ((-1.0) ** l) \
                        / math.factorial(m)
    return K, F


def check_compatibility(model):
    """K, its condition number, and whether the integral inverse exists."""
    K, _ = boundary_system(model)
    svals = np.linalg.svd(K, compute_uv=False)
    smax = float(svals[0]) if len(svals) else 0.0
    smin = float(svals[-1]) if len(svals) else 0.0
    compatible = smin > 1e-9 * smax and smax > 0.0
    cond = smax / smin if smin > 0 else np.inf
    return CompatibilityReport(compatible, K, cond, smin, smax)


def construct_T(model):
    """The integral right-inverse of the blockwise spatial derivative.

    Both kernels share a smooth correction H(s, th) = E(s) K^{-1} F(th); the
    lower kernel additionally carries the repeated-integration diagonal
    (s - th)^{d_i - 1} / (d_i - 1)!.
    """
    report = check_compatibility(model)
    if not report.compatible:
        raise IncompatibleDomainError(report.K, report.cond)
    a, b = model.domain
    n = model.n
    offs = model.offsets()
    nc = model.n_core
    K, F = boundary_system(model)

    # E(s): n x nc with E[i, offs[i]+k] = (s-a)^k / k!
    E_coeffs = {}
    for i, d in enumerate(model.orders):
        for k in range(d):
            fact = 1.0 / math.factorial(k)
            for l in range(k + 1):
                c = fact * math.comb(k, l) * ((-a) ** (k - l))
                if c == 0.0:
                    continue
                E_coeffs.setdefault((l, 0), np.zeros((n, nc)))[i, offs[i] + k] += c
    E = MatrixPolynomial(n, nc, E_coeffs, model.domain)

    F_coeffs = {}
    for (r, i), entry in F.items():
        for th_exp, val in entry.items():
            F_coeffs.setdefault((0, th_exp), np.zeros((nc, n)))[r, i] += val
    Fpoly = MatrixPolynomial(nc, n, F_coeffs, model.domain, True)

    Kinv = MatrixPolynomial.constant(np.linalg.inv(K), model.domain)
    H = (E @ Kinv @ Fpoly).scale(-1.0)

    # diagonal repeated-integration kernel
    J_coeffs = {}
    for i, d in enumerate(model.orders):
        fact = 1.0 / math.factorial(d - 1)
        for l in range(d):
            c = fact * math.comb(d - 1, l) * ((-1.0) ** l)
            J_coeffs.setdefault((d - 1 - l, l), np.zeros((n, n)))[i, i] += c
    J = MatrixPolynomial(n, n, J_coeffs, model.domain, True)

    return PIOperator.from_parts(n, n, model.domain, P1=J + H, P2=H.copy())


def boundary_trace(T, model, component, derivative, endpoint):
    """Kernel of the bounded functional v -> d^j (T v)_i(endpoint).

    Valid for j <= d_i - 1, where row i of d^j T is integral-only; at the
    left endpoint only the upper kernel survives, at the right only the
    lower. Returns a 1 x n polynomial in th.
    """
    i, j = component, derivative
    model._check_trace(i, j, endpoint)
    Dj = T.diff_compose(j)
    row = Dj.select_rows([i])
    if not row.P0.is_zero(1e-9 * max(T.max_abs_coeff(), 1.0)):
        raise InvalidModelError(
            f"trace ({component}, {derivative}) is not integral-only")
    a, b = model.domain
    if endpoint == "a":
        return row.P2.eval_s(a)
    return row.P1.eval_s(b)


def construct_A(model, T):
    """The bounded generator image A = A o T plus boundary-coupling kernels."""
    n = model.n
    max_k = max((k for k, _ in model.coeffs), default=0)
    derivs = [T]
    for _ in range(max_k):
        derivs.append(derivs[-1].diff_compose(1))
    A = PIOperator.zero(n, n, model.domain)
    for k, poly in model.coeffs:
        A = A + derivs[k].mult_left(poly)
    for c in model.couplings:
        trace = boundary_trace(T, model, c.component, c.derivative, c.endpoint)
        rank_one = c.column @ trace  # n x 1 in s times 1 x n in th
        A = A + PIOperator.from_parts(n, n, model.domain,
                                      P1=rank_one, P2=rank_one.copy())
    return A


def build_pie(model):
    report = check_compatibility(model)
    if not report.compatible:
        raise IncompatibleDomainError(report.K, report.cond)
    T = construct_T(model)
    A = construct_A(model, T)
    return PIESystem(T=T, A=A, model=model, K=report.K, cond=report.cond)


def blockwise_derivative(T, orders):
    """Apply d^{d_i}/ds^{d_i} to row block i of T; identity for a valid T."""
    rows = []
    for i, d in enumerate(orders):
        rows.append(T.diff_compose(d).select_rows([i]))
    from .operators import vstack
    return vstack(rows)


# -- uniform-order closed form (independent cross-check) ---------------------

def uniform_defn_matrices(model):
    """The (B, C) boundary matrices in derivative-major block convention.

    Only defined for uniform-order models; column block j collects the
    coefficients of d^j u(endpoint).
    """
    d = model.orders[0]
    if any(di != d for di in model.orders):
        raise InvalidModelError("uniform order required")
    n = model.n
    nd = n * d
    B = np.zeros((nd, nd))
    C = np.zeros((nd, nd))
    for r, row in enumerate(model.bcs):
        for t in row:
            target = B if t.endpoint == "a" else C
            target[r, t.derivative * n + t.component] += t.coeff
    return B, C


def uniform_closed_form_T(model):
    """Green's kernel from the explicit block formula, uniform order only.

    Lower kernel (s-th)^{d-1}/(d-1)! I - E1' Q(s-a) K^{-1} C Q(b-th) Ed,
    upper kernel the same without the leading diagonal term.
    """
    d = model.orders[0]
    n = model.n
    a, b = model.domain
    B, C = uniform_defn_matrices(model)
    K = B + C @ build_Q(b - a, n, d)
    s_shift = MatrixPolynomial(1, 1, {(1, 0): [[1.0]], (0, 0): [[-a]]},
                               model.domain)
    th_shift = MatrixPolynomial(1, 1, {(0, 1): [[-1.0]], (0, 0): [[b]]},
                                model.domain, True)
    Qs = build_Q(s_shift, n, d)
    Qth = build_Q(th_shift, n, d)
    E1 = MatrixPolynomial.constant(
        np.vstack([np.eye(n)] + [np.zeros((n, n))] * (d - 1)), model.domain)
    Ed = MatrixPolynomial.constant(
        np.vstack([np.zeros((n, n))] * (d - 1) + [np.eye(n)]), model.domain)
    KinvC = MatrixPolynomial.constant(np.linalg.solve(K, C), model.domain)
    H = (E1.transpose() @ Qs @ KinvC @ Qth @ Ed).scale(-1.0)

    J_coeffs = {}
    fact = 1.0 / math.factorial(d - 1)
    for l in range(d):
        c = fact * math.comb(d - 1, l) * ((-1.0) ** l)
        J_coeffs[(d - 1 - l, l)] = c * np.eye(n)
    J = MatrixPolynomial(n, n, J_coeffs, model.domain, True)
    return PIOperator.from_parts(n, n, model.domain, P1=J + H, P2=H.copy())
