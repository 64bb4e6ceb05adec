"""Matrix-free normal equations and the preconditioned CG driver.

The minimum-variance estimate solves A x = b where, in the wavefront
space,

    A_w = S^T W S + Kinv^T Kinv,        b_w = S^T W d,

with S the slope operator, W the inverse noise covariance and Kinv the
inverse multiscale map (so Kinv^T Kinv is the inverse prior covariance).
The change of variables w = K u whitens the prior and gives

    A_u = K^T S^T W S K + I,            b_u = K^T b_w.

Every product is evaluated by composing the component operators; no
matrix is ever formed.  Two diagonal preconditioners are available:
Jacobi (the operator diagonal) and a diagonal that weights each slot by
diag(A) over the squared row norm, which minimises the Frobenius
distance between the preconditioned operator and the identity.  Both
need one operator application per basis vector, a one-time cost that is
cached on disk.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .fractal import FractalOperator
from .metrics import FlopCounter, residual_stats, strehl_ratio
from .sensor import Pupil, ShackHartmann, SlopeSet, make_pupil
from .turbulence import kolmogorov

# method string -> (unknown space, preconditioner kind)
VARIANTS = {
    "w-cg": ("w", None),
    "w-pcg-jac": ("w", "jacobi"),
    "w-pcg-opt": ("w", "optimal"),
    "u-cg": ("u", None),
    "u-pcg-jac": ("u", "jacobi"),
    "u-pcg-opt": ("u", "optimal"),
}


class IndefiniteOperatorError(RuntimeError):
    """The operator handed to CG is not positive definite."""


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    method: str = "u-pcg-opt"
    max_iter: int = 30
    tol: float = 1e-3

    def __post_init__(self):
        if self.method not in VARIANTS:
            raise ValueError(f"unknown method {self.method!r}, pick one of {sorted(VARIANTS)}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")

    @property
    def space(self) -> str:
        return VARIANTS[self.method][0]

    @property
    def preconditioner(self) -> str | None:
        return VARIANTS[self.method][1]


class NormalOperator:
    """Left-hand side A x of the normal equations, applied matrix-free.

    ``inv_var`` holds one inverse noise variance per subaperture, applied
    to both slope components.  Inputs of shape (..., n, n) are treated as
    a batch; ``apply`` never mutates its argument.
    """

    def __init__(self, fractal: FractalOperator, sensor: ShackHartmann, inv_var, space: str):
        if space not in ("w", "u"):
            raise ValueError(f"space must be 'w' or 'u', got {space!r}")
        inv_var = np.asarray(inv_var, dtype=float)
        if inv_var.shape != (sensor.pupil.nsub,):
            raise ValueError(
                f"need one inverse variance per subaperture ({sensor.pupil.nsub}), got {inv_var.shape}"
            )
        if np.any(inv_var < 0) or not np.all(np.isfinite(inv_var)):
            raise ValueError("inverse variances must be finite and nonnegative")
        self.fractal = fractal
        self.sensor = sensor
        self.inv_var = inv_var
        self.space = space
        self.n = fractal.n

    def _weight(self, dx, dy, counter):
        dx *= self.inv_var
        dy *= self.inv_var
        if counter is not None:
            counter.add("noise", dx.size + dy.size)

    def apply(self, x, counter=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.space == "w":
            prior = x.copy()
            self.fractal.apply_inverse(prior, counter)
            self.fractal.apply_inverse_transpose(prior, counter)
            dx, dy = self.sensor.forward(x, counter)
            self._weight(dx, dy, counter)
            out = self.sensor.adjoint(dx, dy, counter)
            out += prior
        else:
            screen = x.copy()
            self.fractal.apply(screen, counter)
            dx, dy = self.sensor.forward(screen, counter)
            self._weight(dx, dy, counter)
            out = self.sensor.adjoint(dx, dy, counter)
            self.fractal.apply_transpose(out, counter)
            out += x
        if counter is not None:
            counter.add("vector", x.size)
        return out

    def rhs(self, slopes: SlopeSet, counter=None) -> np.ndarray:
        """Right-hand side b for measured slopes."""
        dx = slopes.sx * self.inv_var
        dy = slopes.sy * self.inv_var
        if counter is not None:
            counter.add("noise", dx.size + dy.size)
        b = self.sensor.adjoint(dx, dy, counter)
        if self.space == "u":
            self.fractal.apply_transpose(b, counter)
        return b


@dataclasses.dataclass(frozen=True)
class DiagonalPreconditioner:
    """Diagonal preconditioner applied multiplicatively, z = values * r."""

    values: np.ndarray
    kind: str
    space: str

    def apply(self, r, counter=None) -> np.ndarray:
        if counter is not None:
            counter.add("precond", r.size)
        return self.values * r


def operator_diagonal_stats(apply_fn, n: int, batch_size: int | None = None):
    """diag(A) and row square-sums of a symmetric operator on n x n grids.

    Applies A to every basis vector (in batches): the i-th application
    yields A e_i, whose i-th entry is the diagonal and whose squared norm
    is the i-th row square-sum.
    """
    size = n * n
    if batch_size is None:
        batch_size = max(1, min(512, (1 << 23) // size))
    diag = np.empty(size)
    rowsq = np.empty(size)
    for start in range(0, size, batch_size):
        idx = np.arange(start, min(start + batch_size, size))
        basis = np.zeros((idx.size, size))
        basis[np.arange(idx.size), idx] = 1.0
        out = apply_fn(basis.reshape(idx.size, n, n)).reshape(idx.size, size)
        diag[idx] = out[np.arange(idx.size), idx]
        rowsq[idx] = np.einsum("ij,ij->i", out, out)
    return diag.reshape(n, n), rowsq.reshape(n, n)


def jacobi_preconditioner(diag, space: str) -> DiagonalPreconditioner:
    diag = np.asarray(diag, dtype=float)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise ValueError("operator diagonal must be finite and positive")
    return DiagonalPreconditioner(values=1.0 / diag, kind="jacobi", space=space)


def optimal_diagonal_preconditioner(diag, rowsq, space: str) -> DiagonalPreconditioner:
    diag = np.asarray(diag, dtype=float)
    rowsq = np.asarray(rowsq, dtype=float)
    if np.any(rowsq <= 0) or not np.all(np.isfinite(rowsq)):
        raise ValueError("row square-sums must be finite and positive")
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise ValueError("operator diagonal must be finite and positive")
    return DiagonalPreconditioner(values=diag / rowsq, kind="optimal", space=space)


def pcg_solve(apply_a, b, *, tol: float = 1e-3, max_iter: int = 30, x0=None,
              preconditioner: DiagonalPreconditioner | None = None,
              counter: FlopCounter | None = None, monitor=None):
    """Preconditioned conjugate gradients for an SPD matrix-free operator.

    Stops when ||r|| <= tol * ||b|| or after max_iter iterations.
    ``monitor(k, x, rnorm)`` is called after initialisation (k = 0) and
    after every iteration.  Returns (x, converged, iterations).  A
    nonpositive curvature p . A p aborts with IndefiniteOperatorError.
    """

    def add(family, count):
        if counter is not None:
            counter.add(family, count)

    b = np.asarray(b, dtype=float)
    size = b.size
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
        bnorm = float(np.sqrt(np.vdot(b, b)))
        add("vector", 2 * size - 1)
        rnorm = bnorm
    else:
        x = np.array(x0, dtype=float)
        r = b - apply_a(x, counter)
        add("vector", size)
        bnorm = float(np.sqrt(np.vdot(b, b)))
        add("vector", 2 * size - 1)
        rnorm = float(np.sqrt(np.vdot(r, r)))
        add("vector", 2 * size - 1)
    if monitor is not None:
        monitor(0, x, rnorm)
    converged = rnorm <= tol * bnorm
    iterations = 0
    rho_prev = 0.0
    p = None
    while not converged and iterations < max_iter:
        z = r if preconditioner is None else preconditioner.apply(r, counter)
        rho = float(np.vdot(r, z))
        add("vector", 2 * size - 1)
        if rho == 0.0:
            converged = True
            break
        if p is None:
            p = z.copy()
        else:
            p = z + (rho / rho_prev) * p
            add("vector", 2 * size)
        q = apply_a(p, counter)
        curvature = float(np.vdot(p, q))
        add("vector", 2 * size - 1)
        if curvature <= 0.0:
            raise IndefiniteOperatorError(
                f"nonpositive curvature p.Ap = {curvature} at iteration {iterations + 1}"
            )
        alpha = rho / curvature
        x += alpha * p
        add("vector", 2 * size)
        r -= alpha * q
        add("vector", 2 * size)
        rho_prev = rho
        iterations += 1
        rnorm = float(np.sqrt(np.vdot(r, r)))
        add("vector", 2 * size - 1)
        converged = rnorm <= tol * bnorm
        if monitor is not None:
            monitor(iterations, x, rnorm)
    return x, converged, iterations


@dataclasses.dataclass
class ConvergenceTrace:
    """Per-iteration record of one solve; row 0 is the initial state.

    Residual-to-truth columns are NaN when no truth was supplied.
    ``flops`` is cumulative; ``total_flops`` additionally includes work
    done after the last iteration (e.g. mapping generators to a screen).
    """

    method: str
    iterations: list[int]
    flops: list[int]
    rnorm: list[float]
    resid_var: list[float]
    resid_var_norm: list[float]
    strehl: list[float]
    converged: bool = False
    total_flops: int = 0

    def rows(self):
        return list(
            zip(self.iterations, self.flops, self.rnorm, self.resid_var,
                self.resid_var_norm, self.strehl)
        )


def _resolve_cache_dir(cache_dir):
    if cache_dir is not None:
        return Path(cache_dir)
    env = os.environ.get("FRACWAVE_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "fracwave"


class Reconstructor:
    """Operators and solver plumbing for one geometry and prior.

    Construct once per (p, r0) and reuse across trials: the diagonal
    preconditioner statistics are cached in memory and on disk, keyed by
    the operator coefficients, the pupil and the noise weights.
    """

    def __init__(self, p: int, r0: float = 1.0, cache_dir=None):
        self.p = int(p)
        self.n = (1 << self.p) + 1
        self.r0 = float(r0)
        self.sf = kolmogorov(self.r0, float(self.n - 1))
        self.fractal = FractalOperator(self.sf, self.p)
        self.pupil: Pupil = make_pupil(self.n)
        self.sensor = ShackHartmann(self.pupil)
        self.cache_dir = _resolve_cache_dir(cache_dir)
        self._stats_cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def system(self, inv_var, space: str) -> NormalOperator:
        return NormalOperator(self.fractal, self.sensor, inv_var, space)

    def check_slopes(self, slopes: SlopeSet):
        slopes.validate()
        if not (
            np.array_equal(slopes.subap_x, self.pupil.subap_x)
            and np.array_equal(slopes.subap_y, self.pupil.subap_y)
        ):
            raise ValueError("slope set does not match the pupil subaperture layout")

    def _stats_key(self, space: str, inv_var) -> str:
        h = hashlib.sha256()
        h.update(space.encode())
        h.update(np.int64(self.n).tobytes())
        o = self.fractal.outer
        coeffs = [o.a, o.b, o.c]
        for lev in self.fractal.levels:
            coeffs.extend(lev.square + lev.triangle + lev.diamond)
        h.update(np.asarray(coeffs, dtype=float).tobytes())
        h.update(self.pupil.subap_x.astype(np.int64).tobytes())
        h.update(self.pupil.subap_y.astype(np.int64).tobytes())
        h.update(np.asarray(inv_var, dtype=float).tobytes())
        return h.hexdigest()

    def _diagonal_stats(self, space: str, inv_var):
        key = self._stats_key(space, inv_var)
        if key in self._stats_cache:
            return self._stats_cache[key]
        path = self.cache_dir / f"diag-{key[:32]}.npz" if self.cache_dir else None
        if path is not None and path.exists():
            with np.load(path) as data:
                stats = (data["diag"], data["rowsq"])
            self._stats_cache[key] = stats
            return stats
        op = self.system(inv_var, space)
        stats = operator_diagonal_stats(op.apply, self.n)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz")
            os.close(fd)
            try:
                np.savez(tmp, diag=stats[0], rowsq=stats[1])
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
        self._stats_cache[key] = stats
        return stats

    def preconditioner(self, inv_var, space: str, kind: str) -> DiagonalPreconditioner:
        diag, rowsq = self._diagonal_stats(space, inv_var)
        if kind == "jacobi":
            return jacobi_preconditioner(diag, space)
        if kind == "optimal":
            return optimal_diagonal_preconditioner(diag, rowsq, space)
        raise ValueError(f"unknown preconditioner kind {kind!r}")

    def reconstruct(self, slopes: SlopeSet, config: SolverConfig, truth=None,
                    counter: FlopCounter | None = None):
        """Estimate the wavefront from slopes; returns (w_hat, trace).

        The estimate keeps its piston component; piston-blind comparison
        is the metrics' job.  With ``truth`` given, the trace records
        piston-removed residual variance (absolute and normalised by the
        iteration-0 value) and the Strehl estimate per iteration.
        """
        self.check_slopes(slopes)
        if counter is None:
            counter = FlopCounter()
        space = config.space
        inv_var = 1.0 / slopes.var
        op = self.system(inv_var, space)
        precond = None
        if config.preconditioner is not None:
            precond = self.preconditioner(inv_var, space, config.preconditioner)
        b = op.rhs(slopes, counter)

        trace = ConvergenceTrace(
            method=config.method, iterations=[], flops=[], rnorm=[],
            resid_var=[], resid_var_norm=[], strehl=[],
        )
        base_var = None

        def monitor(k, x, rnorm):
            nonlocal base_var
            trace.iterations.append(k)
            trace.flops.append(counter.total)
            trace.rnorm.append(rnorm)
            if truth is None:
                trace.resid_var.append(math.nan)
                trace.resid_var_norm.append(math.nan)
                trace.strehl.append(math.nan)
                return
            if space == "w":
                w_k = x
            else:
                w_k = x.copy()
                self.fractal.apply(w_k)  # diagnostic, not charged
            _, var = residual_stats(w_k, truth, self.pupil)
            if base_var is None:
                base_var = var
            trace.resid_var.append(var)
            trace.resid_var_norm.append(var / base_var if base_var > 0 else math.nan)
            trace.strehl.append(strehl_ratio(var))

        x, converged, _ = pcg_solve(
            op.apply, b, tol=config.tol, max_iter=config.max_iter,
            preconditioner=precond, counter=counter, monitor=monitor,
        )
        if space == "u":
            w_hat = x.copy()
            self.fractal.apply(w_hat, counter)
        else:
            w_hat = x
        trace.converged = converged
        trace.total_flops = counter.total
        return w_hat, trace
