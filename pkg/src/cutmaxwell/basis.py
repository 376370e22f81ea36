"""L2-normalized Legendre tensor-product basis on axis-aligned boxes.

The scalar basis on a box is b_{ab}(x) = Lh_a(xi) Lh_b(eta), 0 <= a,b <= p,
where Lh_n is the Legendre polynomial normalized to unit L2 norm on [-1,1]
and (xi, eta) are the reference coordinates of the box.  Flat index
ordering is a*(p+1)+b.  The full-box mass matrix is (hx*hy/4) * I, and
differentiation is an exact linear map on coefficients.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg


@lru_cache(maxsize=None)
def _norm_factors(p: int) -> np.ndarray:
    n = np.arange(p + 1)
    return np.sqrt((2.0 * n + 1.0) / 2.0)


def legendre_values(x, p: int) -> np.ndarray:
    """Values of the normalized Legendre polynomials, shape (len(x), p+1)."""
    x = np.asarray(x, dtype=float)
    return npleg.legvander(x, p) * _norm_factors(p)


@lru_cache(maxsize=None)
def derivative_matrix(p: int) -> np.ndarray:
    """Matrix D with Lh_n' = sum_m D[m, n] Lh_m on [-1, 1].

    Uses L_n' = sum_{m<n, m+n odd} (2m+1) L_m.
    """
    c = _norm_factors(p)
    d = np.zeros((p + 1, p + 1))
    for n in range(1, p + 1):
        for m in range(n - 1, -1, -2):
            d[m, n] = (2 * m + 1) * c[n] / c[m]
    return d


def legendre_derivatives(x, p: int) -> np.ndarray:
    """Derivative values of the normalized Legendre polynomials."""
    return legendre_values(x, p) @ derivative_matrix(p)


class BoxBasis:
    """Tensor basis of order p on the box [x0,x1] x [y0,y1].

    Evaluation accepts physical points; the basis extends polynomially
    outside the box (used when a macro-element copy is evaluated on a
    neighboring sub-region).
    """

    def __init__(self, p: int, bounds):
        self.p = p
        self.x0, self.y0, self.x1, self.y1 = (float(v) for v in bounds)
        self.hx = self.x1 - self.x0
        self.hy = self.y1 - self.y0
        if self.hx <= 0 or self.hy <= 0:
            raise ValueError(f"empty box {bounds}")
        self.size = (p + 1) * (p + 1)

    def reference(self, pts: np.ndarray):
        pts = np.asarray(pts, dtype=float)
        xi = (2.0 * pts[:, 0] - self.x0 - self.x1) / self.hx
        eta = (2.0 * pts[:, 1] - self.y0 - self.y1) / self.hy
        return xi, eta

    def values(self, pts: np.ndarray) -> np.ndarray:
        """(npts, size) array of basis values."""
        xi, eta = self.reference(pts)
        vx = legendre_values(xi, self.p)
        vy = legendre_values(eta, self.p)
        return np.einsum("na,nb->nab", vx, vy).reshape(len(xi), self.size)

    def values_and_gradients(self, pts: np.ndarray):
        """Returns (values (n,s), gradients (n,s,2))."""
        xi, eta = self.reference(pts)
        vx = legendre_values(xi, self.p)
        vy = legendre_values(eta, self.p)
        dvx = vx @ derivative_matrix(self.p) * (2.0 / self.hx)
        dvy = vy @ derivative_matrix(self.p) * (2.0 / self.hy)
        n = len(xi)
        vals = np.einsum("na,nb->nab", vx, vy).reshape(n, self.size)
        gx = np.einsum("na,nb->nab", dvx, vy).reshape(n, self.size)
        gy = np.einsum("na,nb->nab", vx, dvy).reshape(n, self.size)
        return vals, np.stack([gx, gy], axis=-1)

    def dx_matrix(self) -> np.ndarray:
        """Coefficient map of d/dx (exact; Q_p -> Q_p)."""
        eye = np.eye(self.p + 1)
        return (2.0 / self.hx) * np.kron(derivative_matrix(self.p), eye)

    def dy_matrix(self) -> np.ndarray:
        eye = np.eye(self.p + 1)
        return (2.0 / self.hy) * np.kron(eye, derivative_matrix(self.p))

    def mass_scale(self) -> float:
        """Full-box scalar mass matrix is mass_scale() * identity."""
        return 0.25 * self.hx * self.hy

    def project(self, f, rule) -> np.ndarray:
        """L2 projection of f onto the full box using a quadrature rule.

        f maps (n,2) points to (n,) values (may be complex).
        """
        vals = self.values(rule.points)
        rhs = vals.T @ (rule.weights * np.asarray(f(rule.points)))
        return rhs / self.mass_scale()
