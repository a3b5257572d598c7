"""Multivariate polynomials given as coefficient tables.

A polynomial is a list of terms ``[coeff, [p_1, ..., p_n]]`` meaning
``coeff * x_1**p_1 * ... * x_n**p_n``. An empty list is the zero polynomial.
"""
import math

import numpy as np

from .errors import DimensionMismatch


class Polynomial:
    # Term tables are tiny, so plain Python loops beat numpy's per-call overhead.
    __slots__ = ("n", "terms")

    def __init__(self, terms, n, where="polynomial"):
        self.n = n
        parsed = []
        for k, term in enumerate(terms):
            c, p = term
            if len(p) != n:
                raise DimensionMismatch(f"{where}[{k}]: exponent list has length {len(p)}, expected {n}")
            parsed.append((float(c), tuple((j, int(e)) for j, e in enumerate(p) if int(e) != 0)))
        self.terms = tuple(parsed)

    def __call__(self, x):
        x = x.tolist() if isinstance(x, np.ndarray) else list(x)
        total = 0.0
        try:
            for c, factors in self.terms:
                v = c
                for j, e in factors:
                    v *= x[j] if e == 1 else x[j] ** e
                total += v
        except OverflowError:
            # numpy semantics: overflow gives a non-finite value, caught by the integrator
            return math.inf
        return float(total)

    def grad(self, x):
        x = x.tolist() if isinstance(x, np.ndarray) else list(x)
        g = [0.0] * self.n
        try:
            for c, factors in self.terms:
                for j, e in factors:
                    v = c * e
                    for jj, ee in factors:
                        ee = ee - 1 if jj == j else ee
                        if ee:
                            v *= x[jj] if ee == 1 else x[jj] ** ee
                    g[j] += v
        except OverflowError:
            return np.full(self.n, math.inf)
        return np.array(g)


def poly_vector(table, n, where):
    polys = [Polynomial(t, n, f"{where}[{i}]") for i, t in enumerate(table)]

    def fn(x):
        return np.array([p(x) for p in polys])
    fn.polys = polys
    return fn


def poly_matrix(table, n, rows, cols, where):
    """Callable returning the rows x cols matrix, plus its directional derivative."""
    if len(table) != rows or any(len(r) != cols for r in table):
        raise DimensionMismatch(f"{where} must be a {rows} x {cols} table of polynomials")
    polys = [[Polynomial(t, n, f"{where}[{i}][{j}]") for j, t in enumerate(r)] for i, r in enumerate(table)]

    def fn(x):
        return np.array([[p(x) for p in r] for r in polys]).reshape(rows, cols)

    def dfn(x, v):
        v = np.asarray(v, float)
        return np.array([[float(p.grad(x) @ v) for p in r] for r in polys]).reshape(rows, cols)
    return fn, dfn
