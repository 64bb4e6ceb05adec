"""Fried-geometry Shack-Hartmann forward model on an annular pupil.

A subaperture sits on each unit cell of the sample grid; its two slopes
are corner finite differences of the wavefront,

    dx = (w(x+1,y+1) + w(x+1,y) - w(x,y+1) - w(x,y)) / 2
    dy = (w(x+1,y+1) - w(x+1,y) + w(x,y+1) - w(x,y)) / 2

in radians per grid step.  Only subapertures whose four corner samples
all fall inside the annular pupil contribute measurements.
"""

from __future__ import annotations

import dataclasses

import numpy as np


@dataclasses.dataclass(frozen=True)
class Pupil:
    """Annular aperture on an n x n sample grid.

    ``sample_mask`` marks the union of corners of valid subapertures;
    ``subap_x``/``subap_y`` hold the lower-left corner of each valid
    subaperture in row-major order.
    """

    n: int
    obscuration: float
    sample_mask: np.ndarray
    subap_x: np.ndarray
    subap_y: np.ndarray

    @property
    def nsub(self) -> int:
        return int(self.subap_x.size)

    @property
    def diameter(self) -> int:
        return self.n - 1


def make_pupil(n: int, obscuration: float = 1.0 / 3.0) -> Pupil:
    """Pupil of outer diameter n - 1 samples with a central obscuration.

    The outer radius is (n - 1) / 2 around the grid centre and the
    obscuration diameter is ``obscuration`` times the outer diameter.
    Boundary samples count as inside.
    """
    if n < 3:
        raise ValueError(f"grid side must be at least 3, got {n}")
    if not 0.0 <= obscuration < 1.0:
        raise ValueError(f"obscuration ratio must be in [0, 1), got {obscuration}")
    yy, xx = np.mgrid[0:n, 0:n]
    # 4 * squared distance from the centre, exact in integers.
    s = (2 * xx - (n - 1)) ** 2 + (2 * yy - (n - 1)) ** 2
    inside = (s <= (n - 1) ** 2) & (s >= (obscuration * (n - 1)) ** 2)
    valid = inside[:-1, :-1] & inside[:-1, 1:] & inside[1:, :-1] & inside[1:, 1:]
    sy, sx = np.nonzero(valid)
    mask = np.zeros((n, n), dtype=bool)
    for dy in (0, 1):
        for dx in (0, 1):
            mask[sy + dy, sx + dx] = True
    return Pupil(n=n, obscuration=obscuration, sample_mask=mask, subap_x=sx, subap_y=sy)


@dataclasses.dataclass
class SlopeSet:
    """Measured slopes and their noise variances, one row per subaperture.

    ``var`` applies to both slope components of its subaperture and must
    stay positive so that inverse-variance weighting is finite.
    """

    subap_x: np.ndarray
    subap_y: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    var: np.ndarray

    @property
    def nsub(self) -> int:
        return int(self.sx.size)

    @property
    def n_data(self) -> int:
        return 2 * self.nsub

    def validate(self):
        sizes = {a.size for a in (self.subap_x, self.subap_y, self.sx, self.sy, self.var)}
        if len(sizes) != 1:
            raise ValueError(f"inconsistent slope array lengths {sizes}")
        for name, a in (("sx", self.sx), ("sy", self.sy), ("var", self.var)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"non-finite values in {name}")
        if np.any(self.var <= 0):
            raise ValueError("noise variances must be positive")
        return self


class ShackHartmann:
    """Slope extraction over a pupil and its adjoint, batch friendly.

    The flop charge per application is 2 * edges + 2 * nsub: vertical
    cell-edge sums and differences are shared between the two slope
    components and between adjacent subapertures, matching the factored
    evaluation below.
    """

    def __init__(self, pupil: Pupil):
        self.pupil = pupil
        n = pupil.n
        sx, sy = pupil.subap_x, pupil.subap_y
        self._i00 = sy * n + sx
        self._ie = sy * n + sx + 1
        self._in = (sy + 1) * n + sx
        self._ine = (sy + 1) * n + sx + 1
        edges = set(zip(sx.tolist(), sy.tolist())) | set(zip((sx + 1).tolist(), sy.tolist()))
        self.n_edges = len(edges)
        self._flops = 2 * self.n_edges + 2 * pupil.nsub

    def _flat(self, w) -> np.ndarray:
        n = self.pupil.n
        if w.shape[-2:] != (n, n):
            raise ValueError(f"wavefront side must be {n}, got {w.shape[-2:]}")
        return w.reshape(w.shape[:-2] + (n * n,))

    def forward(self, w, counter=None):
        """Slopes (dx, dy) of shape (..., nsub) for wavefront (..., n, n)."""
        W = self._flat(np.asarray(w, dtype=float))
        w00 = W[..., self._i00]
        we = W[..., self._ie]
        wn = W[..., self._in]
        wne = W[..., self._ine]
        dx = 0.5 * (wne + we - wn - w00)
        dy = 0.5 * (wne - we + wn - w00)
        if counter is not None:
            batch = W.size // W.shape[-1] if W.size else 1
            counter.add("sensor", batch * self._flops)
        return dx, dy

    def adjoint(self, dx, dy, counter=None) -> np.ndarray:
        """Scatter slopes back onto a wavefront grid (the transpose map)."""
        dx = np.asarray(dx, dtype=float)
        dy = np.asarray(dy, dtype=float)
        n = self.pupil.n
        out = np.zeros(dx.shape[:-1] + (n * n,))
        hx = 0.5 * dx
        hy = 0.5 * dy
        # Within each corner class the subaperture corners are distinct,
        # so buffered fancy-index updates are safe.
        out[..., self._ine] += hx + hy
        out[..., self._ie] += hx - hy
        out[..., self._in] += hy - hx
        out[..., self._i00] -= hx + hy
        if counter is not None:
            batch = out.size // (n * n) if out.size else 1
            counter.add("sensor", batch * self._flops)
        return out.reshape(dx.shape[:-1] + (n, n))


def simulate_measurements(w_true, pupil: Pupil, noise_std: float, rng) -> SlopeSet:
    """Noisy slopes d = forward(w_true) + noise, noise i.i.d. N(0, noise_std^2).

    With noise_std = 0 the data are exact and the variance column falls
    back to 1.0 so that inverse-variance weighting stays finite.
    """
    if noise_std < 0:
        raise ValueError(f"noise_std must be nonnegative, got {noise_std}")
    rng = np.random.default_rng(rng)
    shs = ShackHartmann(pupil)
    dx, dy = shs.forward(np.asarray(w_true, dtype=float))
    nsub = pupil.nsub
    if noise_std > 0:
        dx = dx + rng.normal(0.0, noise_std, nsub)
        dy = dy + rng.normal(0.0, noise_std, nsub)
        var = np.full(nsub, noise_std * noise_std)
    else:
        var = np.ones(nsub)
    return SlopeSet(
        subap_x=pupil.subap_x.copy(),
        subap_y=pupil.subap_y.copy(),
        sx=np.asarray(dx, dtype=float),
        sy=np.asarray(dy, dtype=float),
        var=var,
    ).validate()
