"""Multiscale mid-point operators between white generators and screens.

A screen on an (2**p + 1) x (2**p + 1) grid is built from the four
support corners inward.  Each refinement pass halves the cell size and
overwrites every new sample with a perturbed interpolation of already
placed neighbours,

    w0 = alpha0 * u0 + sum_j alpha_j * w_j,

where u0 is the unit-variance generator previously stored in the same
slot.  The weights are chosen per scale so that the new sample keeps the
stationary variance sigma^2 and the prescribed structure function
against each of its parents.  Three parent configurations occur:

* square   - cell centre from the 4 cell corners,
* triangle - boundary edge midpoint from the 2 edge ends and the
             nearest same-pass cell centre,
* diamond  - interior edge midpoint from the 2 edge ends and the 2
             flanking same-pass cell centres.

The same pass structure gives the transpose, the inverse and the inverse
transpose at identical cost.  All four run in place: the buffer holds
generators on one side of the map and wavefront samples on the other.

Ordering constraints for in-place evaluation: the forward map refines
coarse to fine and, within a pass, centres before edge midpoints (the
midpoints read same-pass centres); the inverse walks fine to coarse with
edge midpoints before centres.  The transposed maps reverse those orders.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

SQRT2 = math.sqrt(2.0)


class CoefficientError(ValueError):
    """Interpolation weights not constructible from the requested statistics."""

    def __init__(self, message, radicand=None):
        super().__init__(message)
        self.radicand = radicand


@dataclasses.dataclass(frozen=True)
class ScaleCoefficients:
    """Interpolation weights for one refinement pass.

    ``cell`` is the parent cell size r in grid steps.  Weight tuples put
    alpha0 first; parent weights are equal within the square and diamond
    configurations by symmetry.
    """

    cell: int
    square: tuple[float, float]            # (alpha0, alpha_parent)
    triangle: tuple[float, float, float]   # (alpha0, alpha_end, alpha_centre)
    diamond: tuple[float, float]           # (alpha0, alpha_parent)


@dataclasses.dataclass(frozen=True)
class OuterOperator:
    """4 x 4 factor seeding the support corners from four generators.

    The generators map to piston, waffle and the two tip/tilt corner
    modes; a, b, c are fixed by the corner covariances so that the
    seeded corners already have the target statistics.
    """

    a: float
    b: float
    c: float

    @property
    def forward_matrix(self) -> np.ndarray:
        a, b, c = self.a, self.b, self.c
        return 0.5 * np.array(
            [
                [a, -b, -c, 0.0],
                [a, b, 0.0, -c],
                [a, -b, c, 0.0],
                [a, b, 0.0, c],
            ]
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        a, b, c = self.a, self.b, self.c
        return 0.5 * np.array(
            [
                [1 / a, 1 / a, 1 / a, 1 / a],
                [-1 / b, 1 / b, -1 / b, 1 / b],
                [-2 / c, 0.0, 2 / c, 0.0],
                [0.0, -2 / c, 0.0, 2 / c],
            ]
        )


def solve_coefficients_numeric(parent_cov, cross_cov, sigma2):
    """Solve the interpolation-weight system by generic linear algebra.

    Solves  parent_cov @ alphas = cross_cov  and completes alpha0 from
    the variance budget  alpha0^2 = sigma2 - cross_cov @ alphas.  Kept as
    the reference oracle for the closed forms below.
    """
    parent_cov = np.asarray(parent_cov, dtype=float)
    cross_cov = np.asarray(cross_cov, dtype=float)
    try:
        alphas = np.linalg.solve(parent_cov, cross_cov)
    except np.linalg.LinAlgError as exc:
        raise CoefficientError(f"singular parent covariance: {exc}") from exc
    radicand = float(sigma2 - cross_cov @ alphas)
    if radicand <= 0:
        raise CoefficientError(
            f"nonpositive generator variance {radicand}", radicand=radicand
        )
    return math.sqrt(radicand), alphas


def square_coefficients(sf, r) -> tuple[float, float]:
    """Weights for a cell centre interpolated from the 4 cell corners.

    The innovation variance is evaluated in structure-function
    differences; the plain covariance expression cancels sigma^2-scale
    terms and sheds digits on large supports where sigma^2 >> f(r).
    """
    s2 = sf.covariance(0.0)
    f2 = sf.evaluate(r / SQRT2)
    f3 = sf.evaluate(float(r))
    f4 = sf.evaluate(SQRT2 * r)
    den = 4.0 * s2 - f3 - 0.5 * f4
    if den <= 0:
        raise CoefficientError(f"degenerate parent covariance sum {den} at cell {r}")
    alpha = (s2 - 0.5 * f2) / den
    radicand = (s2 * (4.0 * f2 - f3 - 0.5 * f4) - f2 * f2) / den
    if radicand <= 0:
        raise CoefficientError(
            f"nonpositive generator variance {radicand} at cell {r}", radicand=radicand
        )
    return math.sqrt(radicand), alpha


def triangle_coefficients(sf, r) -> tuple[float, float, float]:
    """Weights for a boundary edge midpoint: 2 edge ends + 1 centre.

    Same rearrangement as the square: the covariance form of this
    system multiplies sigma^4-scale products before differencing and
    loses ~8 digits of the innovation variance at the finest cells of a
    large support, so every intermediate here stays at sigma^2 scale.
    """
    s2 = sf.covariance(0.0)
    f1 = sf.evaluate(0.5 * r)
    f2 = sf.evaluate(r / SQRT2)
    f3 = sf.evaluate(float(r))
    c1 = s2 - 0.5 * f1
    d = 2.0 * f2 - 0.5 * f3
    den = s2 * d - 0.5 * f2 * f2
    if den == 0:
        raise CoefficientError(f"singular parent covariance at cell {r}")
    alpha_end = c1 * (0.5 * f2) / den
    alpha_ctr = c1 * (f2 - 0.5 * f3) / den
    radicand = (s2 * (f1 * d - 0.5 * f2 * f2) - 0.25 * f1 * f1 * d) / den
    if radicand <= 0:
        raise CoefficientError(
            f"nonpositive generator variance {radicand} at cell {r}", radicand=radicand
        )
    return math.sqrt(radicand), alpha_end, alpha_ctr


def diamond_coefficients(sf, r) -> tuple[float, float]:
    # Interior edge midpoint: 4 parents at r/2 on a diagonal square, which
    # is the square configuration shrunk by sqrt(2).
    return square_coefficients(sf, r / SQRT2)


def build_coefficients(sf, p: int) -> list[ScaleCoefficients]:
    """Per-pass weights, coarsest first (cell = 2**p down to 2)."""
    if p < 1:
        raise ValueError(f"need at least one refinement pass, got p={p}")
    levels = []
    for k in range(p, 0, -1):
        r = 1 << k
        levels.append(
            ScaleCoefficients(
                cell=r,
                square=square_coefficients(sf, r),
                triangle=triangle_coefficients(sf, r),
                diamond=diamond_coefficients(sf, r),
            )
        )
    return levels


def build_outer_operator(sf, extent) -> OuterOperator:
    """Corner factor for a square support of side ``extent`` grid steps."""
    sigma2 = sf.variance
    f_side = sf.evaluate(float(extent))
    f_diag = sf.evaluate(SQRT2 * extent)
    a2 = 4.0 * sigma2 - f_side - 0.5 * f_diag
    b2 = f_side - 0.5 * f_diag
    c2 = f_diag
    for name, value in (("a", a2), ("b", b2), ("c", c2)):
        if value <= 0:
            raise CoefficientError(
                f"nonpositive corner mode variance {name}^2 = {value}", radicand=value
            )
    return OuterOperator(a=math.sqrt(a2), b=math.sqrt(b2), c=math.sqrt(c2))


def scale_count(side: int) -> int:
    """Number of refinement passes p for a grid side 2**p + 1."""
    m = side - 1
    if side < 3 or m & (m - 1):
        raise ValueError(f"grid side must be 2**p + 1 with p >= 1, got {side}")
    return m.bit_length() - 1


class FractalOperator:
    """In-place multiscale maps between generator and screen grids.

    Grids are float64 arrays whose last two axes are (2**p + 1) square;
    leading axes are treated as a batch.  Each of the four maps costs
    exactly 6 * n**2 - 14 flops per grid and mutates its argument.
    """

    def __init__(self, sf, p: int):
        self.p = int(p)
        if self.p < 1:
            raise ValueError(f"need at least one refinement pass, got p={self.p}")
        self.n = (1 << self.p) + 1
        self.levels = build_coefficients(sf, self.p)
        self.outer = build_outer_operator(sf, float(self.n - 1))

    # -- plumbing ---------------------------------------------------------

    def _grid(self, grid) -> np.ndarray:
        if not isinstance(grid, np.ndarray) or grid.dtype != np.float64:
            raise ValueError("expected a float64 ndarray (operators run in place)")
        if grid.shape[-2:] != (self.n, self.n):
            raise ValueError(
                f"grid side must be {self.n} (= 2**{self.p} + 1), got {grid.shape[-2:]}"
            )
        return grid

    def _charge(self, grid, counter):
        if counter is not None:
            batch = grid.size // (self.n * self.n)
            counter.add("fractal", batch * (6 * self.n * self.n - 14))

    def _corners(self, W):
        # Cyclic order around the support: consecutive corners share a side.
        n = self.n
        return (
            np.copy(W[..., 0, 0]),
            np.copy(W[..., 0, n - 1]),
            np.copy(W[..., n - 1, n - 1]),
            np.copy(W[..., n - 1, 0]),
        )

    def _set_corners(self, W, v1, v2, v3, v4):
        n = self.n
        W[..., 0, 0] = v1
        W[..., 0, n - 1] = v2
        W[..., n - 1, n - 1] = v3
        W[..., n - 1, 0] = v4

    # -- corner factor ----------------------------------------------------

    def _outer_forward(self, W):
        o = self.outer
        u1, u2, u3, u4 = self._corners(W)
        pa = 0.5 * o.a * u1
        pb = 0.5 * o.b * u2
        pc = 0.5 * o.c * u3
        pd = 0.5 * o.c * u4
        self._set_corners(W, pa - pb - pc, pa + pb - pd, pa - pb + pc, pa + pb + pd)

    def _outer_inverse(self, W):
        o = self.outer
        w1, w2, w3, w4 = self._corners(W)
        self._set_corners(
            W,
            (w1 + w2 + w3 + w4) / (2.0 * o.a),
            (-w1 + w2 - w3 + w4) / (2.0 * o.b),
            (w3 - w1) / o.c,
            (w4 - w2) / o.c,
        )

    def _outer_transpose(self, W):
        o = self.outer
        w1, w2, w3, w4 = self._corners(W)
        self._set_corners(
            W,
            0.5 * o.a * (w1 + w2 + w3 + w4),
            0.5 * o.b * (-w1 + w2 - w3 + w4),
            0.5 * o.c * (w3 - w1),
            0.5 * o.c * (w4 - w2),
        )

    def _outer_inverse_transpose(self, W):
        o = self.outer
        w1, w2, w3, w4 = self._corners(W)
        pa = w1 / (2.0 * o.a)
        pb = w2 / (2.0 * o.b)
        pc = w3 / o.c
        pd = w4 / o.c
        self._set_corners(W, pa - pb - pc, pa + pb - pd, pa - pb + pc, pa + pb + pd)

    # -- the four maps ----------------------------------------------------

    def apply(self, grid, counter=None):
        """Overwrite generators with the correlated screen (w = K u)."""
        W = self._grid(grid)
        n = self.n
        self._outer_forward(W)
        for lev in self.levels:
            r = lev.cell
            h = r >> 1
            m = (n - 1) // r
            Cg = W[..., ::r, ::r]
            ctr = W[..., h::r, h::r]
            a0, ap = lev.square
            ctr *= a0
            ctr += ap * (
                Cg[..., :-1, :-1] + Cg[..., :-1, 1:] + Cg[..., 1:, :-1] + Cg[..., 1:, 1:]
            )
            t0, te, tc = lev.triangle
            d0, dp = lev.diamond
            hsum = Cg[..., :, :-1] + Cg[..., :, 1:]
            row = W[..., 0, h::r]
            row *= t0
            row += te * hsum[..., 0, :] + tc * ctr[..., 0, :]
            row = W[..., n - 1, h::r]
            row *= t0
            row += te * hsum[..., m, :] + tc * ctr[..., m - 1, :]
            if m > 1:
                mid = W[..., r : n - 1 : r, h::r]
                mid *= d0
                mid += dp * (hsum[..., 1:m, :] + ctr[..., : m - 1, :] + ctr[..., 1:, :])
            vsum = Cg[..., :-1, :] + Cg[..., 1:, :]
            col = W[..., h::r, 0]
            col *= t0
            col += te * vsum[..., :, 0] + tc * ctr[..., :, 0]
            col = W[..., h::r, n - 1]
            col *= t0
            col += te * vsum[..., :, m] + tc * ctr[..., :, m - 1]
            if m > 1:
                mid = W[..., h::r, r : n - 1 : r]
                mid *= d0
                mid += dp * (vsum[..., :, 1:m] + ctr[..., :, : m - 1] + ctr[..., :, 1:])
        self._charge(W, counter)
        return grid

    def apply_inverse(self, grid, counter=None):
        """Overwrite a screen with its generators (u = K^-1 w)."""
        W = self._grid(grid)
        n = self.n
        for lev in reversed(self.levels):
            r = lev.cell
            h = r >> 1
            m = (n - 1) // r
            Cg = W[..., ::r, ::r]
            ctr = W[..., h::r, h::r]
            a0, ap = lev.square
            t0, te, tc = lev.triangle
            d0, dp = lev.diamond
            hsum = Cg[..., :, :-1] + Cg[..., :, 1:]
            row = W[..., 0, h::r]
            row -= te * hsum[..., 0, :] + tc * ctr[..., 0, :]
            row /= t0
            row = W[..., n - 1, h::r]
            row -= te * hsum[..., m, :] + tc * ctr[..., m - 1, :]
            row /= t0
            if m > 1:
                mid = W[..., r : n - 1 : r, h::r]
                mid -= dp * (hsum[..., 1:m, :] + ctr[..., : m - 1, :] + ctr[..., 1:, :])
                mid /= d0
            vsum = Cg[..., :-1, :] + Cg[..., 1:, :]
            col = W[..., h::r, 0]
            col -= te * vsum[..., :, 0] + tc * ctr[..., :, 0]
            col /= t0
            col = W[..., h::r, n - 1]
            col -= te * vsum[..., :, m] + tc * ctr[..., :, m - 1]
            col /= t0
            if m > 1:
                mid = W[..., h::r, r : n - 1 : r]
                mid -= dp * (vsum[..., :, 1:m] + ctr[..., :, : m - 1] + ctr[..., :, 1:])
                mid /= d0
            ctr -= ap * (
                Cg[..., :-1, :-1] + Cg[..., :-1, 1:] + Cg[..., 1:, :-1] + Cg[..., 1:, 1:]
            )
            ctr /= a0
        self._outer_inverse(W)
        self._charge(W, counter)
        return grid

    def apply_transpose(self, grid, counter=None):
        """Apply the transpose of the forward map (z = K^T z), in place."""
        W = self._grid(grid)
        n = self.n
        for lev in reversed(self.levels):
            r = lev.cell
            h = r >> 1
            m = (n - 1) // r
            Cg = W[..., ::r, ::r]
            ctr = W[..., h::r, h::r]
            a0, ap = lev.square
            t0, te, tc = lev.triangle
            d0, dp = lev.diamond
            row = W[..., 0, h::r]
            Cg[..., 0, :-1] += te * row
            Cg[..., 0, 1:] += te * row
            ctr[..., 0, :] += tc * row
            row *= t0
            row = W[..., n - 1, h::r]
            Cg[..., m, :-1] += te * row
            Cg[..., m, 1:] += te * row
            ctr[..., m - 1, :] += tc * row
            row *= t0
            if m > 1:
                mid = W[..., r : n - 1 : r, h::r]
                Cg[..., 1:m, :-1] += dp * mid
                Cg[..., 1:m, 1:] += dp * mid
                ctr[..., : m - 1, :] += dp * mid
                ctr[..., 1:, :] += dp * mid
                mid *= d0
            col = W[..., h::r, 0]
            Cg[..., :-1, 0] += te * col
            Cg[..., 1:, 0] += te * col
            ctr[..., :, 0] += tc * col
            col *= t0
            col = W[..., h::r, n - 1]
            Cg[..., :-1, m] += te * col
            Cg[..., 1:, m] += te * col
            ctr[..., :, m - 1] += tc * col
            col *= t0
            if m > 1:
                mid = W[..., h::r, r : n - 1 : r]
                Cg[..., :-1, 1:m] += dp * mid
                Cg[..., 1:, 1:m] += dp * mid
                ctr[..., :, : m - 1] += dp * mid
                ctr[..., :, 1:] += dp * mid
                mid *= d0
            Cg[..., :-1, :-1] += ap * ctr
            Cg[..., :-1, 1:] += ap * ctr
            Cg[..., 1:, :-1] += ap * ctr
            Cg[..., 1:, 1:] += ap * ctr
            ctr *= a0
        self._outer_transpose(W)
        self._charge(W, counter)
        return grid

    def apply_inverse_transpose(self, grid, counter=None):
        """Apply the inverse transpose (z = K^-T z), in place."""
        W = self._grid(grid)
        n = self.n
        self._outer_inverse_transpose(W)
        for lev in self.levels:
            r = lev.cell
            h = r >> 1
            m = (n - 1) // r
            Cg = W[..., ::r, ::r]
            ctr = W[..., h::r, h::r]
            a0, ap = lev.square
            t0, te, tc = lev.triangle
            d0, dp = lev.diamond
            ctr /= a0
            Cg[..., :-1, :-1] -= ap * ctr
            Cg[..., :-1, 1:] -= ap * ctr
            Cg[..., 1:, :-1] -= ap * ctr
            Cg[..., 1:, 1:] -= ap * ctr
            row = W[..., 0, h::r]
            row /= t0
            Cg[..., 0, :-1] -= te * row
            Cg[..., 0, 1:] -= te * row
            ctr[..., 0, :] -= tc * row
            row = W[..., n - 1, h::r]
            row /= t0
            Cg[..., m, :-1] -= te * row
            Cg[..., m, 1:] -= te * row
            ctr[..., m - 1, :] -= tc * row
            if m > 1:
                mid = W[..., r : n - 1 : r, h::r]
                mid /= d0
                Cg[..., 1:m, :-1] -= dp * mid
                Cg[..., 1:m, 1:] -= dp * mid
                ctr[..., : m - 1, :] -= dp * mid
                ctr[..., 1:, :] -= dp * mid
            col = W[..., h::r, 0]
            col /= t0
            Cg[..., :-1, 0] -= te * col
            Cg[..., 1:, 0] -= te * col
            ctr[..., :, 0] -= tc * col
            col = W[..., h::r, n - 1]
            col /= t0
            Cg[..., :-1, m] -= te * col
            Cg[..., 1:, m] -= te * col
            ctr[..., :, m - 1] -= tc * col
            if m > 1:
                mid = W[..., h::r, r : n - 1 : r]
                mid /= d0
                Cg[..., :-1, 1:m] -= dp * mid
                Cg[..., 1:, 1:m] -= dp * mid
                ctr[..., :, : m - 1] -= dp * mid
                ctr[..., :, 1:] -= dp * mid
        self._charge(W, counter)
        return grid
