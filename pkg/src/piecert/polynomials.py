"""Matrix-valued polynomials in one variable s or two variables (s, th) on [a, b].

Coefficients are kept in a sparse map from exponent pairs to dense matrices.
Every kernel manipulation in the operator algebra reduces to the arithmetic
defined here, so the operations are exact up to floating point.
"""

from __future__ import annotations

import math
import re
import warnings

import numpy as np

# Coefficients below this fraction of the largest one are dropped on
# construction; keeps coefficient-wise equality meaningful in float arithmetic.
PRUNE_REL_TOL = 1e-12

# Default tolerance for normalized coefficient comparison.
EQUAL_TOL = 1e-10


class ShapeMismatchError(ValueError):
    """Matrix or polynomial dimensions do not line up."""


class DomainMismatchError(ValueError):
    """Operands live on different intervals."""


def _check_domain(domain):
    a, b = float(domain[0]), float(domain[1])
    if not (a < b) or not (math.isfinite(a) and math.isfinite(b)):
        raise DomainMismatchError(f"need finite a < b, got [{a}, {b}]")
    return (a, b)


class MatrixPolynomial:
    """A rows x cols polynomial matrix, sparse in the exponents.

    ``coeffs`` maps ``(i, j)`` (exponents of s and th) to a dense (rows, cols)
    array. Univariate polynomials keep all th-exponents at zero and are marked
    with ``bivariate=False``.
    """

    __slots__ = ("rows", "cols", "domain", "coeffs", "bivariate")

    def __init__(self, rows, cols, coeffs, domain, bivariate=False):
        self.rows = int(rows)
        self.cols = int(cols)
        self.domain = _check_domain(domain)
        self.bivariate = bool(bivariate)
        pruned = {}
        gmax = 0.0
        staged = {}
        for (i, j), mat in coeffs.items():
            arr = np.asarray(mat, dtype=float)
            if arr.shape != (self.rows, self.cols):
                raise ShapeMismatchError(
                    f"coefficient at s^{i} th^{j} has shape {arr.shape}, "
                    f"expected {(self.rows, self.cols)}"
                )
            if j != 0 and not self.bivariate:
                raise ValueError("univariate polynomial with nonzero th exponent")
            staged[(int(i), int(j))] = arr
            gmax = max(gmax, float(np.max(np.abs(arr))) if arr.size else 0.0)
        cutoff = PRUNE_REL_TOL * gmax
        for key, arr in staged.items():
            if gmax > 0.0 and np.max(np.abs(arr)) > cutoff:
                pruned[key] = arr
        self.coeffs = pruned

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, rows, cols, domain, bivariate=False):
        return cls(rows, cols, {}, domain, bivariate)

    @classmethod
    def constant(cls, mat, domain, bivariate=False):
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(mat.shape[0], mat.shape[1], {(0, 0): mat}, domain, bivariate)

    @classmethod
    def identity(cls, n, domain, bivariate=False):
        return cls.constant(np.eye(n), domain, bivariate)

    @classmethod
    def monomial(cls, mat, s_exp, th_exp=0, domain=(0.0, 1.0), bivariate=None):
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        if bivariate is None:
            bivariate = th_exp > 0
        return cls(mat.shape[0], mat.shape[1], {(s_exp, th_exp): mat},
                   domain, bivariate=bivariate)

    @classmethod
    def from_scalar_coeffs(cls, c, domain, variable="s"):
        """1x1 polynomial from a constant-first coefficient list."""
        coeffs = {}
        for k, ck in enumerate(c):
            if ck != 0.0:
                key = (k, 0) if variable == "s" else (0, k)
                coeffs[key] = np.array([[float(ck)]])
        return cls(1, 1, coeffs, domain, bivariate=(variable == "th"))

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    def deg_s(self):
        return max((i for (i, _) in self.coeffs), default=0)

    def deg_th(self):
        return max((j for (_, j) in self.coeffs), default=0)

    def max_abs_coeff(self):
        return max((float(np.max(np.abs(m))) for m in self.coeffs.values()),
                   default=0.0)

    def is_zero(self, tol=0.0):
        return self.max_abs_coeff() <= tol

    def copy(self):
        return MatrixPolynomial(self.rows, self.cols,
                                {k: m.copy() for k, m in self.coeffs.items()},
                                self.domain, self.bivariate)

    def _require_same_grid(self, other):
        if self.domain != other.domain:
            raise DomainMismatchError(f"{self.domain} vs {other.domain}")

    def equals(self, other, tol=EQUAL_TOL):
        """Coefficient-wise comparison, normalized by the largest coefficient."""
        self._require_same_grid(other)
        if self.shape != other.shape:
            raise ShapeMismatchError(f"{self.shape} vs {other.shape}")
        scale = max(self.max_abs_coeff(), other.max_abs_coeff())
        if scale == 0.0:
            return True
        diff = self - other
        return diff.max_abs_coeff() <= tol * scale

    # -- linear structure ----------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, MatrixPolynomial):
            return NotImplemented
        self._require_same_grid(other)
        if self.shape != other.shape:
            raise ShapeMismatchError(f"{self.shape} + {other.shape}")
        coeffs = {k: m.copy() for k, m in self.coeffs.items()}
        for k, m in other.coeffs.items():
            coeffs[k] = coeffs.get(k, 0.0) + m
        return MatrixPolynomial(self.rows, self.cols, coeffs, self.domain,
                                self.bivariate or other.bivariate)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self.scale(-1.0)

    def scale(self, c):
        c = float(c)
        return MatrixPolynomial(
            self.rows, self.cols,
            {k: c * m for k, m in self.coeffs.items()},
            self.domain, self.bivariate)

    def __mul__(self, c):
        if isinstance(c, (int, float)):
            return self.scale(c)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        """Matrix-polynomial product; exponents add."""
        if not isinstance(other, MatrixPolynomial):
            return NotImplemented
        self._require_same_grid(other)
        if self.cols != other.rows:
            raise ShapeMismatchError(
                f"inner dimensions {self.cols} != {other.rows}")
        coeffs = {}
        for (i1, j1), m1 in self.coeffs.items():
            for (i2, j2), m2 in other.coeffs.items():
                key = (i1 + i2, j1 + j2)
                prod = m1 @ m2
                if key in coeffs:
                    coeffs[key] = coeffs[key] + prod
                else:
                    coeffs[key] = prod
        return MatrixPolynomial(self.rows, other.cols, coeffs, self.domain,
                                self.bivariate or other.bivariate)

    # -- structural reshaping ------------------------------------------------

    def transpose(self):
        return MatrixPolynomial(self.cols, self.rows,
                                {k: m.T.copy() for k, m in self.coeffs.items()},
                                self.domain, self.bivariate)

    def swap_vars(self):
        """Exchange the roles of s and th (kernel reflection)."""
        return MatrixPolynomial(self.rows, self.cols,
                                {(j, i): m.copy() for (i, j), m in self.coeffs.items()},
                                self.domain, True)

    def diagonal_restriction(self):
        """Substitute th := s; collapses a kernel onto its diagonal."""
        coeffs = {}
        for (i, j), m in self.coeffs.items():
            key = (i + j, 0)
            coeffs[key] = coeffs.get(key, 0.0) + m
        return MatrixPolynomial(self.rows, self.cols, coeffs, self.domain, False)

    def as_second_variable(self):
        """Reinterpret a univariate p(s) as p(th)."""
        if self.bivariate and self.deg_th() > 0:
            raise ValueError("already depends on th")
        return MatrixPolynomial(self.rows, self.cols,
                                {(0, i): m.copy() for (i, _), m in self.coeffs.items()},
                                self.domain, True)

    def submatrix(self, row_idx, col_idx):
        row_idx = list(row_idx)
        col_idx = list(col_idx)
        coeffs = {k: m[np.ix_(row_idx, col_idx)] for k, m in self.coeffs.items()}
        return MatrixPolynomial(len(row_idx), len(col_idx), coeffs, self.domain,
                                self.bivariate)

    def eval_s(self, value):
        """Partially evaluate at s = value, leaving a polynomial in th."""
        value = float(value)
        coeffs = {}
        for (i, j), m in self.coeffs.items():
            key = (0, j)
            coeffs[key] = coeffs.get(key, 0.0) + (value ** i) * m
        return MatrixPolynomial(self.rows, self.cols, coeffs, self.domain, True)

    # -- calculus --------------------------------------------------------------

    def differentiate_s(self, order=1):
        if order < 0:
            raise ValueError("order must be >= 0")
        p = self
        for _ in range(order):
            coeffs = {}
            for (i, j), m in p.coeffs.items():
                if i > 0:
                    coeffs[(i - 1, j)] = i * m
            p = MatrixPolynomial(self.rows, self.cols, coeffs, self.domain,
                                 self.bivariate)
        return p

    def antiderivative_s(self):
        coeffs = {(i + 1, j): m / (i + 1) for (i, j), m in self.coeffs.items()}
        return MatrixPolynomial(self.rows, self.cols, coeffs, self.domain,
                                self.bivariate)

    def integrate_theta(self, lower, upper):
        """Definite integral over th with limits among {'a', 's'} x {'s', 'b'}.

        The antiderivative th^(j+1)/(j+1) is evaluated at polynomial or
        constant limits, so the result is exact and univariate in s.
        """
        if lower not in ("a", "s") or upper not in ("s", "b"):
            raise ValueError("limits must be lower in {'a','s'}, upper in {'s','b'}")
        a, b = self.domain
        coeffs = {}

        def accumulate(i, m):
            if i in coeffs:
                coeffs[i] = coeffs[i] + m
            else:
                coeffs[i] = m.copy() if isinstance(m, np.ndarray) else m

        for (i, j), m in self.coeffs.items():
            inv = 1.0 / (j + 1)
            # upper limit
            if upper == "s":
                accumulate(i + j + 1, inv * m)
            else:
                accumulate(i, (b ** (j + 1)) * inv * m)
            # lower limit
            if lower == "s":
                accumulate(i + j + 1, -inv * m)
            else:
                accumulate(i, -(a ** (j + 1)) * inv * m)
        return MatrixPolynomial(self.rows, self.cols,
                                {(i, 0): m for i, m in coeffs.items()},
                                self.domain, False)

    def integrate_s_interval(self):
        """Integral over the full interval [a, b]; univariate input only."""
        if self.deg_th() > 0:
            raise ValueError("still depends on th")
        a, b = self.domain
        out = np.zeros((self.rows, self.cols))
        for (i, _), m in self.coeffs.items():
            out += m * (b ** (i + 1) - a ** (i + 1)) / (i + 1)
        return out

    def frobenius_square(self):
        """The 1x1 polynomial sum_ij p_ij(s,th)^2."""
        coeffs = {}
        items = list(self.coeffs.items())
        for (i1, j1), m1 in items:
            for (i2, j2), m2 in items:
                key = (i1 + i2, j1 + j2)
                val = float(np.sum(m1 * m2))
                coeffs[key] = coeffs.get(key, 0.0) + val
        return MatrixPolynomial(
            1, 1, {k: np.array([[v]]) for k, v in coeffs.items()},
            self.domain, self.bivariate)

    # -- evaluation -------------------------------------------------------------

    def evaluate(self, s_value, th_value=None):
        """Numeric matrix at a point. Points outside [a, b] are flagged."""
        a, b = self.domain
        pts = [s_value] if th_value is None else [s_value, th_value]
        for p in pts:
            if p < a - 1e-12 or p > b + 1e-12:
                warnings.warn(
                    f"evaluation point {p} outside domain [{a}, {b}]",
                    stacklevel=2)
        if self.bivariate and th_value is None and self.deg_th() > 0:
            raise ValueError("bivariate polynomial needs a th value")
        th_value = 0.0 if th_value is None else float(th_value)
        out = np.zeros((self.rows, self.cols))
        for (i, j), m in self.coeffs.items():
            out += (s_value ** i) * (th_value ** j) * m
        return out

    def eval_theta_grid(self, th_values):
        """Evaluate an s-free polynomial on many th points: (N, rows, cols)."""
        if self.deg_s() > 0:
            raise ValueError("still depends on s; use eval_s first")
        th_values = np.asarray(th_values, dtype=float)
        out = np.zeros((len(th_values), self.rows, self.cols))
        for (_, j), m in self.coeffs.items():
            out += (th_values ** j)[:, None, None] * m
        return out

    # -- text form ---------------------------------------------------------------

    def __repr__(self):
        kind = "s,th" if self.bivariate else "s"
        return (f"MatrixPolynomial({self.rows}x{self.cols} in ({kind}), "
                f"{len(self.coeffs)} terms, domain={self.domain})")

    def entry_to_text(self, r, c):
        terms = []
        for (i, j) in sorted(self.coeffs):
            v = self.coeffs[(i, j)][r, c]
            if v == 0.0:
                continue
            part = repr(float(v))
            if i > 0:
                part += f"*s^{i}"
            if j > 0:
                part += f"*th^{j}"
            terms.append(part)
        return " + ".join(terms) if terms else "0"

    def to_text(self):
        lines = []
        for r in range(self.rows):
            row = [self.entry_to_text(r, c) for c in range(self.cols)]
            lines.append("[" + ", ".join(row) + "]")
        return "\n".join(lines)


_TERM_RE = re.compile(
    r"^\s*(?P<coeff>[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|inf|nan))"
    r"(\*s\^(?P<se>\d+))?(\*th\^(?P<te>\d+))?\s*$")


def parse_entry_text(text):
    """Inverse of MatrixPolynomial.entry_to_text for a single entry.

    Returns a dict (s_exp, th_exp) -> float.
    """
    out = {}
    text = text.strip()
    if text == "0":
        return out
    for term in text.replace("- ", "+ -").split(" + "):
        m = _TERM_RE.match(term)
        if m is None:
            raise ValueError(f"cannot parse polynomial term {term!r}")
        key = (int(m.group("se") or 0), int(m.group("te") or 0))
        out[key] = out.get(key, 0.0) + float(m.group("coeff"))
    return out


def from_entry_dicts(entries, rows, cols, domain, bivariate):
    """Assemble a MatrixPolynomial from per-entry exponent->value dicts."""
    coeffs = {}
    for (r, c), terms in entries.items():
        for key, v in terms.items():
            if key not in coeffs:
                coeffs[key] = np.zeros((rows, cols))
            coeffs[key][r, c] += v
    return MatrixPolynomial(rows, cols, coeffs, domain, bivariate)


def build_Q(z, n, d, domain=None):
    """Upper-triangular block matrix with blocks z^(j-i)/(j-i)! * I_n.

    For a numeric ``z`` this returns a plain (n*d, n*d) array; for a 1x1
    MatrixPolynomial it returns the corresponding matrix polynomial. The
    family satisfies Q(z1) Q(z2) = Q(z1 + z2).
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if isinstance(z, MatrixPolynomial):
        if z.shape != (1, 1):
            raise ShapeMismatchError("z must be scalar-valued")
        dom = z.domain
        out_coeffs = {}
        power = MatrixPolynomial.constant(np.array([[1.0]]), dom, z.bivariate)
        for k in range(d):
            fact = 1.0 / math.factorial(k)
            for (i, j), m in power.coeffs.items():
                if (i, j) not in out_coeffs:
                    out_coeffs[(i, j)] = np.zeros((n * d, n * d))
                block = out_coeffs[(i, j)]
                for r in range(d - k):
                    c = r + k
                    block[r * n:(r + 1) * n, c * n:(c + 1) * n] += \
                        fact * float(m[0, 0]) * np.eye(n)
            power = power @ z
        return MatrixPolynomial(n * d, n * d, out_coeffs, dom,
                                bivariate=z.bivariate)
    z = float(z)
    out = np.zeros((n * d, n * d))
    for r in range(d):
        for c in range(r, d):
            out[r * n:(r + 1) * n, c * n:(c + 1) * n] = \
                (z ** (c - r)) / math.factorial(c - r) * np.eye(n)
    return out
