"""Polynomial basis expansion of the context vector.

A basis spec fixes the family of monomials ``g_1..g_m`` evaluated on the
context ``z``; the cell's input weights are linear combinations of these.
The expansion deliberately has NO constant term: the count convention is
m = C(n_z + d, d) - 1, i.e. every monomial of total degree 1..d. An
all-zero context therefore zeroes the whole input pathway, which is why
contexts are normalized away from the exact zero vector in practice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import ShapeError


@dataclass(frozen=True)
class BasisSpec:
    """Monomial basis over ``n_z`` context variables, degrees 1..degree.

    ``exponents`` lists one exponent tuple per basis function in graded
    lexicographic order (degree 1 block first, then degree 2, ...); this
    order is the canonical coefficient layout used by checkpoints.
    """

    kind: str
    degree: int
    n_z: int
    exponents: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.exponents)


def basis_size(degree: int, n_z: int) -> int:
    """Number of monomials of total degree 1..degree in n_z variables."""
    return math.comb(n_z + degree, degree) - 1


def build_spec(kind: str = "polynomial", degree: int = 2, n_z: int = 3) -> BasisSpec:
    """Construct a basis spec; only the polynomial family is implemented.

    degree 0 is rejected: it would make the input weights independent of
    context, which is just the plain GRU.
    """
    if kind != "polynomial":
        raise ValueError(f"unknown basis kind {kind!r}; supported: 'polynomial'")
    if degree < 1:
        raise ValueError("degree must be >= 1 (degree 0 weights would be context-free)")
    if n_z < 1:
        raise ValueError("n_z must be >= 1")
    exps = []
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(n_z), total):
            e = [0] * n_z
            for var in combo:
                e[var] += 1
            exps.append(tuple(e))
    spec = BasisSpec(kind, degree, n_z, tuple(exps))
    assert spec.m == basis_size(degree, n_z)
    return spec


def eval_basis(spec: BasisSpec, z) -> np.ndarray:
    """Evaluate all basis monomials at a single context vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (spec.n_z,):
        raise ShapeError(f"context has shape {z.shape}, spec expects ({spec.n_z},)")
    exp = np.asarray(spec.exponents)
    return np.prod(z[None, :] ** exp, axis=1)


def eval_basis_cols(spec: BasisSpec, z_cols: np.ndarray) -> np.ndarray:
    """Evaluate the basis column-wise: (n_z, B) -> (m, B)."""
    if z_cols.ndim != 2 or z_cols.shape[0] != spec.n_z:
        raise ShapeError(f"context columns have shape {z_cols.shape}, spec expects ({spec.n_z}, B)")
    exp = np.asarray(spec.exponents)  # (m, n_z)
    return np.prod(z_cols[None, :, :] ** exp[:, :, None], axis=1)
