"""Spin representation of the real Clifford algebra Cl(n), n even.

Conventions used throughout the package:

* c(v)^2 = -|v|^2, generators c_i = i * gamma_i with gamma_i Hermitian
  Pauli strings;
* grading Gamma = i^l c_1 ... c_n (l = n/2), which comes out as the
  diagonal matrix sigma_3 x ... x sigma_3;
* with this grading str(c_1 c_2) = -2i for n = 2.

A skew matrix A acts on spinors through dstar(A) = 1/4 sum a_ij c_i c_j
with a_ij = <A e_i, e_j>.  In this indexing dstar is a Lie algebra
homomorphism so(n) -> End(Delta) and exp(dstar(A)) covers exp(A).
"""
from dataclasses import dataclass
from functools import reduce
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

_I2 = np.eye(2, dtype=complex)
_S1 = np.array([[0, 1], [1, 0]], dtype=complex)
_S2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_S3 = np.array([[1, 0], [0, -1]], dtype=complex)


def _kron_all(mats):
    return reduce(np.kron, mats)


@dataclass(frozen=True, eq=False)
class SpinRep:
    """Clifford generators and chirality operator on Delta = Delta+ (+) Delta-."""
    n: int
    generators: np.ndarray      # (n, dim, dim)
    grading: np.ndarray         # (dim, dim), diagonal +-1

    @property
    def dim(self):
        return self.generators.shape[-1]

    @property
    def half_dims(self):
        g = np.real(np.diag(self.grading))
        return int(np.sum(g > 0)), int(np.sum(g < 0))

    def clifford(self, v):
        """c(v) for a vector (or stack of vectors) v in R^n."""
        v = np.asarray(v, dtype=float)
        return np.tensordot(v, self.generators, axes=([-1], [0]))


def build_spin_rep(n):
    """Spin representation for even n with 2 <= n <= 8."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise TypeError("n must be an integer")
    if n % 2 or n < 2 or n > 8:
        raise ValueError(f"n={n}: need an even dimension between 2 and 8 "
                         "(odd n has no chirality grading; n > 8 is outside desk scale)")
    ell = n // 2
    gens = []
    for k in range(ell):
        head = [_S3] * k
        tail = [_I2] * (ell - k - 1)
        for s in (_S1, _S2):
            gamma = _kron_all(head + [s] + tail)
            gens.append(1j * gamma)
    gens = np.array(gens)
    vol = reduce(np.matmul, gens)
    grading = (1j ** ell) * vol
    # round away the +-0j noise; the product is exactly diagonal +-1
    grading = np.round(grading.real) + 0j
    return SpinRep(n=n, generators=gens, grading=grading)


def as_skew(A, n=None):
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError("expected a square matrix")
    if n is not None and A.shape[-1] != n:
        raise ValueError(f"matrix is {A.shape[-1]}x{A.shape[-1]}, representation has n={n}")
    if not np.allclose(A, -np.swapaxes(A, -1, -2), atol=1e-12):
        raise ValueError("matrix is not antisymmetric")
    return A


def dstar(A, rep):
    """Spinor action 1/4 sum_ij a_ij c_i c_j of a skew matrix (a_ij = A[j, i]).

    Accepts stacks of matrices with shape (..., n, n).
    """
    A = as_skew(A, rep.n)
    C = rep.generators
    pairs = np.einsum('iab,jbc->ijac', C, C)
    return 0.25 * np.einsum('...ji,ijac->...ac', A, pairs)


def supertrace(op, rep, rank=1):
    """tr over Delta+ minus tr over Delta-.

    ``op`` may act on Delta (x) C^rank (Delta index slowest); leading batch
    axes are allowed.
    """
    op = np.asarray(op)
    D = rep.dim * rank
    if op.shape[-2:] != (D, D):
        raise ValueError(f"operator shape {op.shape[-2:]} does not match dimension {D}")
    g = np.repeat(np.real(np.diag(rep.grading)), rank)
    return np.einsum('...ii,i->...', op, g)


class SpinExp(NamedTuple):
    truncated: np.ndarray
    full: np.ndarray


def spin_exp(A, rep, order):
    """Truncated series sum_{k<=order} dstar(A)^k/k! next to the full exponential."""
    if order < 0:
        raise ValueError("order must be >= 0")
    X = dstar(A, rep)
    term = np.broadcast_to(np.eye(rep.dim, dtype=complex), X.shape).copy()
    total = term.copy()
    for k in range(1, order + 1):
        term = term @ X / k
        total = total + term
    return SpinExp(total, expm(X))


def skew_log(Q):
    """Principal logarithm of a rotation matrix, as a real skew matrix."""
    from scipy.linalg import logm
    L = np.real(logm(Q))
    return 0.5 * (L - L.T)


def rotation_generator(n, i=0, j=1):
    """Skew matrix rotating e_i towards e_j (the e_i ^ e_j generator)."""
    J = np.zeros((n, n))
    J[j, i] = 1.0
    J[i, j] = -1.0
    return J
