"""Parameterization of positive operators by a lifted quadratic form.

An operator variable is written as Theta* M Theta where Theta stacks a
multiplier block Z0(s) (x) I_n and two integral blocks with kernels
Z1(s, th) (x) I_n (lower) and Z2 = Z1 (upper). For symmetric M the realized
operator is self-adjoint, and M >= 0 makes it positive semidefinite on L2.

The realization is linear in M; ``pair_contributions`` enumerates the map
monomial pair by monomial pair in closed form (the middle-variable integrals
of the quadratic form are elementary), which both realizes numeric M's and
feeds the equality rows of the semidefinite program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .polynomials import MatrixPolynomial
from .operators import PIOperator


@dataclass(frozen=True)
class PosOpParam:
    """Monomial degree and block layout of one lifted operator variable.

    ``multiplier_block=False`` drops the Z0 stage, parameterizing positive
    integral-only operators; for a PSD gram matrix a zero realized multiplier
    forces the Z0 blocks to vanish anyway, so nothing is lost when the
    target operator is known to be multiplier-free.
    """
    n: int
    deg: int
    domain: tuple
    kernel_basis: str = "sep"  # "sep": each variable <= deg; "total": joint
    multiplier_block: bool = True

    def __post_init__(self):
        if self.n < 1 or self.deg < 0:
            raise ValueError("need n >= 1 and deg >= 0")
        if self.kernel_basis not in ("sep", "total"):
            raise ValueError(f"unknown kernel basis {self.kernel_basis!r}")

    def z0(self):
        if not self.multiplier_block:
            return []
        return list(range(self.deg + 1))

    def z12(self):
        if self.kernel_basis == "total":
            return [(i, j) for i in range(self.deg + 1)
                    for j in range(self.deg + 1 - i)]
        return [(i, j) for i in range(self.deg + 1)
                for j in range(self.deg + 1)]

    @property
    def m0(self):
        return len(self.z0())

    @property
    def m1(self):
        return len(self.z12())

    @property
    def dim(self):
        return self.n * (self.m0 + 2 * self.m1)

    def block_offsets(self):
        return (0, self.n * self.m0, self.n * (self.m0 + self.m1))

    def var_index(self, block, mono, comp):
        return self.block_offsets()[block] + mono * self.n + comp

    def constant_diagonal(self):
        """Indices of M whose unit diagonal realizes the identity operator."""
        if not self.multiplier_block:
            raise ValueError("no multiplier block; identity is not realizable")
        k0 = self.z0().index(0)
        return [self.var_index(0, k0, i) for i in range(self.n)]

    def identity_gram(self, scale=1.0):
        M = np.zeros((self.dim, self.dim))
        for idx in self.constant_diagonal():
            M[idx, idx] = scale
        return M


def pair_contributions(param):
    """Yield (bk, k, bl, l, part, (es, et), scale) for the map M -> Theta* M Theta.

    The operator's part coefficient at the exponent pair receives
    scale * M[block bk monomial k, block bl monomial l] (an n x n slice).
    """
    a, b = param.domain
    z0 = param.z0()
    z12 = param.z12()
    for k, ak in enumerate(z0):
        for l, al in enumerate(z0):
            yield (0, k, 0, l, 0, (ak + al, 0), 1.0)
        for l, (ls, lt) in enumerate(z12):
            yield (0, k, 1, l, 1, (ak + ls, lt), 1.0)
            yield (0, k, 2, l, 2, (ak + ls, lt), 1.0)
            yield (1, l, 0, k, 2, (lt, ls + ak), 1.0)
            yield (2, l, 0, k, 1, (lt, ls + ak), 1.0)
    for k, (ks, kt) in enumerate(z12):
        for l, (ls, lt) in enumerate(z12):
            c = ks + ls
            inv = 1.0 / (c + 1)
            bc = (b ** (c + 1)) * inv
            ac = (a ** (c + 1)) * inv
            # lower-lower: integral over the region above both arguments
            if bc:
                yield (1, k, 1, l, 1, (kt, lt), bc)
                yield (1, k, 1, l, 2, (kt, lt), bc)
            yield (1, k, 1, l, 1, (kt + c + 1, lt), -inv)
            yield (1, k, 1, l, 2, (kt, lt + c + 1), -inv)
            # upper-upper: integral below both arguments
            yield (2, k, 2, l, 1, (kt, lt + c + 1), inv)
            yield (2, k, 2, l, 2, (kt + c + 1, lt), inv)
            if ac:
                yield (2, k, 2, l, 1, (kt, lt), -ac)
                yield (2, k, 2, l, 2, (kt, lt), -ac)
            # lower-upper / upper-lower: integral between the arguments
            yield (1, k, 2, l, 2, (kt, lt + c + 1), inv)
            yield (1, k, 2, l, 2, (kt + c + 1, lt), -inv)
            yield (2, k, 1, l, 1, (kt + c + 1, lt), inv)
            yield (2, k, 1, l, 1, (kt, lt + c + 1), -inv)


def realize(param, M):
    """The operator Theta* M Theta for a numeric symmetric M."""
    M = np.asarray(M, dtype=float)
    if M.shape != (param.dim, param.dim):
        raise ValueError(f"M has shape {M.shape}, expected "
                         f"({param.dim}, {param.dim})")
    n = param.n
    offs = param.block_offsets()
    parts = {0: {}, 1: {}, 2: {}}
    for bk, k, bl, l, part, exp, scale in pair_contributions(param):
        r0 = offs[bk] + k * n
        c0 = offs[bl] + l * n
        sub = M[r0:r0 + n, c0:c0 + n]
        acc = parts[part]
        if exp in acc:
            acc[exp] = acc[exp] + scale * sub
        else:
            acc[exp] = scale * sub
    dom = param.domain
    return PIOperator(
        MatrixPolynomial(n, n, parts[0], dom, False),
        MatrixPolynomial(n, n, parts[1], dom, True),
        MatrixPolynomial(n, n, parts[2], dom, True))


def theta_operator(param):
    """The lifting map itself as a partial integral operator.

    realize(param, M) coincides with adjoint(Theta) o M o Theta; the tests
    use this as an independent route through the plain operator algebra.
    """
    n = param.n
    dom = param.domain
    m0, m1 = param.m0, param.m1
    total = param.dim
    offs = param.block_offsets()
    P0 = {}
    P1 = {}
    P2 = {}
    for k, ak in enumerate(param.z0()):
        blockmat = np.zeros((total, n))
        blockmat[offs[0] + k * n:offs[0] + (k + 1) * n, :] = np.eye(n)
        P0[(ak, 0)] = P0.get((ak, 0), 0.0) + blockmat
    for k, (ks, kt) in enumerate(param.z12()):
        m1mat = np.zeros((total, n))
        m1mat[offs[1] + k * n:offs[1] + (k + 1) * n, :] = np.eye(n)
        P1[(ks, kt)] = P1.get((ks, kt), 0.0) + m1mat
        m2mat = np.zeros((total, n))
        m2mat[offs[2] + k * n:offs[2] + (k + 1) * n, :] = np.eye(n)
        P2[(ks, kt)] = P2.get((ks, kt), 0.0) + m2mat
    return PIOperator(
        MatrixPolynomial(total, n, P0, dom, False),
        MatrixPolynomial(total, n, P1, dom, True),
        MatrixPolynomial(total, n, P2, dom, True))
