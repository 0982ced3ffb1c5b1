"""Parameterized Markov kernel families and their shared-noise couplings.

Five families, each exposing an independent ``step`` and a ``coupled_step``
that runs two copies (possibly with different tuning parameters) off the
same underlying noise:

* :class:`DiscreteAr`: x -> x/g + k/g on [0, 1), k uniform in {0..g-1}.
* :class:`GaussianAr`: x -> g x + sqrt(1 - g^2) S z, invariant N(0, S S').
* :class:`DiscreteRwm`: Metropolis chain on a finite grid with a
  discrete-Gaussian proposal.
* :class:`Ula`: unadjusted Langevin, x -> x - h M grad(M x) + sqrt(2h) z.
* :class:`DiffusionTime1`: Euler integration over [0, 1] of the
  overdamped Langevin diffusion with preconditioner M.

The couplings are what make the contraction estimates in the diagnostics
module deterministic rather than statistical: same noise in, difference
out.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import PsdMatrix, RngStream, psd_sqrt
from .errors import (DimensionMismatch, DomainError, Error, StepSizeOutOfRange,
                     VariantMismatch, ZeroDensity)

MATRIX_EIG_TOL = 1e-12   # slack when checking the [eig_min, 1] box
ROW_SUM_TOL = 1e-12      # transition-matrix rows must sum to 1 within this


# ------------------------------------------------------------- tuning params

@dataclass(frozen=True)
class DiscreteBase:
    """Integer base g >= 2 for the discrete AR kernel."""
    gamma: int

    def __post_init__(self):
        if int(self.gamma) != self.gamma or self.gamma < 2:
            raise ValueError("gamma must be an integer >= 2")
        object.__setattr__(self, "gamma", int(self.gamma))


@dataclass(frozen=True)
class ArCoef:
    """AR(1) coefficient 0 < gamma <= gamma_max < 1."""
    gamma: float
    gamma_max: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.gamma_max < 1.0:
            raise ValueError("gamma_max must lie in (0, 1)")
        if not 0.0 < self.gamma <= self.gamma_max:
            raise ValueError("gamma must lie in (0, gamma_max]")


@dataclass(frozen=True)
class MatrixScale:
    """Preconditioner with eigenvalues confined to [eig_min, 1].

    ``descriptor`` is an optional label for the abstract tuning index the
    matrix was derived from; it plays no computational role.
    """
    matrix: PsdMatrix
    eig_min: float = 0.05
    descriptor: Optional[object] = None

    def __post_init__(self):
        if not isinstance(self.matrix, PsdMatrix):
            object.__setattr__(self, "matrix", PsdMatrix(self.matrix))
        if not 0.0 < self.eig_min <= 1.0:
            raise ValueError("eig_min must lie in (0, 1]")
        w = self.matrix.eigenvalues()
        if w[0] < self.eig_min - MATRIX_EIG_TOL or w[-1] > 1.0 + MATRIX_EIG_TOL:
            raise ValueError("matrix eigenvalues [%g, %g] leave the box "
                             "[%g, 1]" % (w[0], w[-1], self.eig_min))


@dataclass(frozen=True)
class LangevinTuning:
    """Preconditioner M and step size h for the Langevin kernels.

    The step-size upper limit 1/(alpha + beta) depends on the potential, so
    it is enforced where the potential is known (ula_step); only the lower
    limit lives here.
    """
    matrix: PsdMatrix
    step: float
    step_min: float = 1e-4

    def __post_init__(self):
        if not isinstance(self.matrix, PsdMatrix):
            object.__setattr__(self, "matrix", PsdMatrix(self.matrix))
        if self.step_min <= 0.0:
            raise ValueError("step_min must be positive")
        if self.step < self.step_min:
            raise StepSizeOutOfRange("step %g below lower limit %g"
                                     % (self.step, self.step_min))


TuningParam = Union[DiscreteBase, ArCoef, MatrixScale, LangevinTuning]


# ----------------------------------------------------------------- potential

@dataclass(frozen=True)
class PotentialSpec:
    """Gradient oracle with strong-convexity and Lipschitz constants.

    The constants are claims about ``gradient``:

        <grad(x) - grad(y), x - y>  >=  convex_param |x - y|^2
        |grad(x) - grad(y)|         <=  lip_param |x - y|

    They are spot-checked by :func:`potential_check` on sampled pairs, not
    taken on faith.
    """
    gradient: Callable
    convex_param: float
    lip_param: float

    def __post_init__(self):
        if self.convex_param <= 0.0:
            raise ValueError("convex_param must be positive")
        if self.lip_param < self.convex_param:
            raise ValueError("lip_param must be >= convex_param")


def quadratic_potential(hessian):
    """PotentialSpec for V(x) = x' A x / 2 with symmetric PD Hessian A."""
    a = PsdMatrix(hessian)
    w = a.eigenvalues()
    if w[0] <= 0.0:
        raise ValueError("hessian must be positive definite")
    entries = a.entries

    def grad(x):
        return entries @ np.asarray(x, dtype=float)

    return PotentialSpec(gradient=grad, convex_param=float(w[0]),
                         lip_param=float(w[-1]))


def potential_check(potential, dim, stream, pairs=256, radius=5.0, tol=1e-9):
    """Spot-check the claimed (convex_param, lip_param) on random pairs.

    Returns a list of (x, y, kind) violations; empty means every sampled
    pair satisfied both inequalities up to ``tol`` slack.
    """
    out = []
    for _ in range(pairs):
        x = stream.normal(dim) * radius
        y = stream.normal(dim) * radius
        dx = x - y
        nrm2 = float(dx @ dx)
        if nrm2 == 0.0:
            continue
        dg = np.asarray(potential.gradient(x)) - np.asarray(potential.gradient(y))
        if float(dg @ dx) < potential.convex_param * nrm2 - tol:
            out.append((x, y, "strong_convexity"))
        if float(dg @ dg) > potential.lip_param ** 2 * nrm2 + tol:
            out.append((x, y, "lipschitz"))
    return out


# ------------------------------------------------------------- step functions

def discrete_ar_step(x, gamma, stream):
    """One step of the base-g discrete AR chain on [0, 1).

    Parameters
    ----------
    x : float in [0, 1)
    gamma : DiscreteBase
    stream : RngStream

    Returns
    -------
    float
        x/g + k/g with k uniform on {0, ..., g-1}; stays in [0, 1).
    """
    if not isinstance(gamma, DiscreteBase):
        raise VariantMismatch("discrete_ar_step needs a DiscreteBase tuning")
    x = float(x)
    if not 0.0 <= x < 1.0:
        raise DomainError("state %r outside [0, 1)" % x)
    g = gamma.gamma
    k = int(stream.integers(0, g))
    return x / g + k / g


def _coupled_discrete_ar(x, gx, y, gy, stream):
    # one shared uniform; k = floor(u * g) is uniform on {0..g-1} for each g
    u = float(stream.uniform())
    kx = min(int(u * gx.gamma), gx.gamma - 1)
    ky = min(int(u * gy.gamma), gy.gamma - 1)
    return x / gx.gamma + kx / gx.gamma, y / gy.gamma + ky / gy.gamma


def gaussian_ar_step(x, gamma, cov_sqrt, stream):
    """One step x -> g x + sqrt(1 - g^2) S z with z standard normal.

    Parameters
    ----------
    x : (d,) array_like
    gamma : ArCoef
    cov_sqrt : PsdMatrix
        S with S S' the invariant covariance.
    stream : RngStream
    """
    if not isinstance(gamma, ArCoef):
        raise VariantMismatch("gaussian_ar_step needs an ArCoef tuning")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != cov_sqrt.dim:
        raise DimensionMismatch("state shape %s incompatible with cov dim %d"
                                % (x.shape, cov_sqrt.dim))
    g = gamma.gamma
    z = stream.normal(x.shape[0])
    return g * x + np.sqrt(1.0 - g * g) * (cov_sqrt.entries @ z)


def ula_step(x, gamma, potential, stream):
    """Unadjusted Langevin step x - h M grad(M x) + sqrt(2h) z.

    The step size must satisfy step_min <= h <= 1/(alpha + beta); the upper
    limit is where the one-step contraction estimate degrades, so it is a
    hard error, not a warning.
    """
    if not isinstance(gamma, LangevinTuning):
        raise VariantMismatch("ula_step needs a LangevinTuning")
    h_max = 1.0 / (potential.convex_param + potential.lip_param)
    if not gamma.step_min <= gamma.step <= h_max + 1e-15:
        raise StepSizeOutOfRange("h=%g outside [%g, %g]"
                                 % (gamma.step, gamma.step_min, h_max))
    x = np.asarray(x, dtype=float)
    m = gamma.matrix.entries
    if x.shape != (m.shape[0],):
        raise DimensionMismatch("state shape %s vs matrix dim %d"
                                % (x.shape, m.shape[0]))
    z = stream.normal(x.shape[0])
    return x - gamma.step * (m @ np.asarray(potential.gradient(m @ x))) \
        + np.sqrt(2.0 * gamma.step) * z


def _ula_drift(x, tuning, potential):
    m = tuning.matrix.entries
    return x - tuning.step * (m @ np.asarray(potential.gradient(m @ x)))


def diffusion_step(x, gamma, kernel, stream):
    """Euler time-1 map of dX = -M grad(M X) dt + sqrt(2) dW.

    Integrates with ``kernel.substeps`` equal Euler steps; the weak bias
    against the exact time-1 kernel is O(1/substeps) and is measured, not
    assumed, in the tests.
    """
    if not isinstance(gamma, MatrixScale):
        raise VariantMismatch("diffusion_step needs a MatrixScale tuning")
    x = np.asarray(x, dtype=float)
    m = gamma.matrix.entries
    if x.shape != (m.shape[0],):
        raise DimensionMismatch("state shape %s vs matrix dim %d"
                                % (x.shape, m.shape[0]))
    n = kernel.substeps
    dt = 1.0 / n
    root = np.sqrt(2.0 * dt)
    grad = kernel.potential.gradient
    for _ in range(n):
        z = stream.normal(x.shape[0])
        x = x - dt * (m @ np.asarray(grad(m @ x))) + root * z
    return x


# ------------------------------------------------------------ kernel families

class DiscreteAr:
    """Base-g refinement chain on [0, 1) with invariant law Unif[0, 1)."""

    tuning_variant = DiscreteBase

    def step(self, x, tuning, stream):
        return discrete_ar_step(x, tuning, stream)

    def coupled_step(self, x, tuning_x, y, tuning_y, stream):
        _require_variant(self, tuning_x, tuning_y)
        return _coupled_discrete_ar(x, tuning_x, y, tuning_y, stream)

    def stationary_sample(self, stream, size=None):
        return stream.uniform(size)

    def __repr__(self):
        return "DiscreteAr()"


class GaussianAr:
    """Vector AR(1) chain with invariant law N(0, cov_sqrt @ cov_sqrt)."""

    tuning_variant = ArCoef

    def __init__(self, cov_sqrt):
        if not isinstance(cov_sqrt, PsdMatrix):
            cov_sqrt = PsdMatrix(cov_sqrt)
        self.cov_sqrt = cov_sqrt
        self.cov = PsdMatrix(cov_sqrt.entries @ cov_sqrt.entries)

    @property
    def dim(self):
        return self.cov_sqrt.dim

    def step(self, x, tuning, stream):
        return gaussian_ar_step(x, tuning, self.cov_sqrt, stream)

    def coupled_step(self, x, tuning_x, y, tuning_y, stream):
        _require_variant(self, tuning_x, tuning_y)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = self.cov_sqrt.entries @ stream.normal(self.dim)
        gx, gy = tuning_x.gamma, tuning_y.gamma
        return (gx * x + np.sqrt(1.0 - gx * gx) * z,
                gy * y + np.sqrt(1.0 - gy * gy) * z)

    def stationary_sample(self, stream, size=None):
        if size is None:
            return self.cov_sqrt.entries @ stream.normal(self.dim)
        return stream.normal((int(size), self.dim)) @ self.cov_sqrt.entries.T

    def __repr__(self):
        return "GaussianAr(dim=%d)" % self.dim


class DiscreteRwm:
    """Metropolis chain on a finite grid with discrete-Gaussian proposals.

    The proposal weight between grid points u, v under preconditioner M is
    q(u, v) = exp(-(u-v)' M^{-1} (u-v) / 2), truncated to zero below
    ``trunc_tol`` (relative to the diagonal weight 1).  Rows are normalized
    by one shared constant (the largest masked row sum) rather than per
    row: per-row normalization on a truncated grid would break the symmetry
    q(u, v) = q(v, u) that makes the accept ratio 1 ∧ f(v)/f(u) correct,
    and with it exact stationarity of f.  The leftover row mass is a
    self-proposal, which Metropolis always accepts.

    States are grid indices, not points.
    """

    tuning_variant = MatrixScale
    _CACHE_LIMIT = 1024  # precompute row CDFs up to this many grid points

    def __init__(self, grid, target_density, trunc_tol=1e-12):
        pts = np.asarray(grid, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise DimensionMismatch("grid must hold at least two points")
        if callable(target_density):
            f = np.asarray([float(target_density(p)) for p in pts])
        else:
            f = np.asarray(target_density, dtype=float)
        if f.shape != (pts.shape[0],):
            raise DimensionMismatch("density values do not match the grid")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("density values must be finite and nonnegative")
        if not np.any(f > 0):
            raise ValueError("density vanishes on the whole grid")
        if trunc_tol < 0 or trunc_tol >= 1:
            raise ValueError("trunc_tol must lie in [0, 1)")
        self.grid = pts
        self.grid.setflags(write=False)
        self.density = f
        self.density.setflags(write=False)
        self.trunc_tol = float(trunc_tol)
        self._rows = {}   # tuning-id keyed cache of (proposal_cdf, proposal)

    @property
    def size(self):
        return self.grid.shape[0]

    def _proposal(self, tuning):
        # key by matrix content: tunings are created freely by policies
        key = (tuning.matrix.entries.tobytes(), tuning.eig_min)
        hit = self._rows.get(key)
        if hit is not None:
            return hit
        m = tuning.matrix
        w = m.eigenvalues()
        vecs = m._eigvecs
        minv = (vecs / w) @ vecs.T
        diff = self.grid[:, None, :] - self.grid[None, :, :]
        quad = np.einsum("ijk,kl,ijl->ij", diff, minv, diff)
        q = np.exp(-0.5 * quad)
        # symmetric tail mask: the diagonal weight is exactly 1, so this
        # zeroes pairs contributing less than trunc_tol of the peak
        q[q < self.trunc_tol] = 0.0
        z = q.sum(axis=1).max()
        prop = q / z
        # degenerate rows: a positive-density state must be able to reach
        # some other positive-density state
        live = self.density > 0
        reach = (prop * live[None, :]) - np.diag(np.diag(prop))
        if np.any(live & (reach.sum(axis=1) <= 0.0)):
            raise Error("proposal row is degenerate at trunc_tol=%g"
                        % self.trunc_tol)
        cdf = np.cumsum(prop, axis=1)
        out = (prop, cdf)
        if self.size <= self._CACHE_LIMIT:
            if len(self._rows) >= 128:
                self._rows.clear()
            self._rows[key] = out
        return out

    def _propose(self, i, tuning, u):
        prop, cdf = self._proposal(tuning)
        row_total = cdf[i, -1]
        if u >= row_total:
            return i  # leftover constant-normalizer mass: self-proposal
        return int(np.searchsorted(cdf[i], u, side="right"))

    def step(self, i, tuning, stream):
        """One Metropolis step from grid index i; returns a grid index."""
        if not isinstance(tuning, MatrixScale):
            raise VariantMismatch("discrete_rwm_step needs a MatrixScale")
        i = int(i)
        if not 0 <= i < self.size:
            raise DomainError("index %d outside grid of size %d" % (i, self.size))
        fi = self.density[i]
        if fi == 0.0:
            raise ZeroDensity("target density vanishes at state %d" % i)
        # two uniforms per step, always, so replay and coupling line up
        u_prop = float(stream.uniform())
        u_acc = float(stream.uniform())
        j = self._propose(i, tuning, u_prop)
        if j == i:
            return i
        if u_acc <= self.density[j] / fi:
            return j
        return i

    def coupled_step(self, i, tuning_x, j, tuning_y, stream):
        _require_variant(self, tuning_x, tuning_y)
        u_prop = float(stream.uniform())
        u_acc = float(stream.uniform())
        out = []
        for idx, tun in ((int(i), tuning_x), (int(j), tuning_y)):
            fi = self.density[idx]
            if fi == 0.0:
                raise ZeroDensity("target density vanishes at state %d" % idx)
            prop = self._propose(idx, tun, u_prop)
            if prop != idx and u_acc <= self.density[prop] / fi:
                out.append(prop)
            else:
                out.append(idx)
        return tuple(out)

    def transition_matrix(self, tuning):
        """Exact one-step transition matrix under the given tuning."""
        prop, _ = self._proposal(tuning)
        f = self.density
        n = self.size
        live = f > 0
        p = np.zeros((n, n))
        # accept ratio min(1, f_k/f_l); zero-density rows have no Metropolis
        # dynamics and are parked in place
        p[live] = np.minimum(1.0, f[None, :] / f[live, None]) * prop[live]
        np.fill_diagonal(p, 0.0)
        diag = 1.0 - p.sum(axis=1)
        p[np.arange(n), np.arange(n)] = diag
        if np.abs(p.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
            raise Error("transition rows failed to normalize")
        return p

    def stationary_law(self, tuning):
        """Exact stationary law of transition_matrix (left Perron vector)."""
        p = self.transition_matrix(tuning)
        w, v = np.linalg.eig(p.T)
        k = int(np.argmin(np.abs(w - 1.0)))
        pi = np.real(v[:, k])
        pi = np.abs(pi)
        return pi / pi.sum()

    def dobrushin_coefficient(self, tuning):
        """max over state pairs of TV(P(i,.), P(j,.)) for the finite grid.

        The strict-contraction analogue of a minorization constant: values
        below 1 certify uniform ergodicity of the frozen chain.
        """
        p = self.transition_matrix(tuning)
        worst = 0.0
        for a in range(self.size):
            diff = np.abs(p[a + 1:] - p[a]).sum(axis=1)
            if diff.size:
                worst = max(worst, 0.5 * float(diff.max()))
        return worst

    def __repr__(self):
        return "DiscreteRwm(size=%d)" % self.size


class Ula:
    """Unadjusted Langevin kernel for a strongly convex potential."""

    tuning_variant = LangevinTuning

    def __init__(self, potential):
        self.potential = potential

    def step(self, x, tuning, stream):
        return ula_step(x, tuning, self.potential, stream)

    def coupled_step(self, x, tuning_x, y, tuning_y, stream):
        _require_variant(self, tuning_x, tuning_y)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        z = stream.normal(x.shape[0])
        for tun in (tuning_x, tuning_y):
            h_max = 1.0 / (self.potential.convex_param + self.potential.lip_param)
            if not tun.step_min <= tun.step <= h_max + 1e-15:
                raise StepSizeOutOfRange("h=%g outside [%g, %g]"
                                         % (tun.step, tun.step_min, h_max))
        xn = _ula_drift(x, tuning_x, self.potential) \
            + np.sqrt(2.0 * tuning_x.step) * z
        yn = _ula_drift(y, tuning_y, self.potential) \
            + np.sqrt(2.0 * tuning_y.step) * z
        return xn, yn

    def __repr__(self):
        return "Ula()"


class DiffusionTime1:
    """Euler-Maruyama time-1 map of the preconditioned Langevin diffusion."""

    tuning_variant = MatrixScale

    def __init__(self, potential, substeps=64):
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.potential = potential
        self.substeps = int(substeps)

    def step(self, x, tuning, stream):
        return diffusion_step(x, tuning, self, stream)

    def coupled_step(self, x, tuning_x, y, tuning_y, stream):
        _require_variant(self, tuning_x, tuning_y)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        mx = tuning_x.matrix.entries
        my = tuning_y.matrix.entries
        grad = self.potential.gradient
        dt = 1.0 / self.substeps
        root = np.sqrt(2.0 * dt)
        for _ in range(self.substeps):
            z = stream.normal(x.shape[0])
            x = x - dt * (mx @ np.asarray(grad(mx @ x))) + root * z
            y = y - dt * (my @ np.asarray(grad(my @ y))) + root * z
        return x, y

    def __repr__(self):
        return "DiffusionTime1(substeps=%d)" % self.substeps


KernelFamily = Union[DiscreteAr, GaussianAr, DiscreteRwm, Ula, DiffusionTime1]


def _require_variant(kernel, *tunings):
    want = kernel.tuning_variant
    for t in tunings:
        if not isinstance(t, want):
            raise VariantMismatch("%r expects %s tunings, got %r"
                                  % (kernel, want.__name__, type(t).__name__))


def step(kernel, x, tuning, stream):
    """Dispatch one independent step on any kernel family."""
    _require_variant(kernel, tuning)
    return kernel.step(x, tuning, stream)


def coupled_step(kernel, x, tuning_x, y, tuning_y, stream):
    """Advance two copies of the kernel off one shared noise draw.

    First output is marginally a P_{tuning_x} step from x, second a
    P_{tuning_y} step from y.  Both tunings must match the kernel's
    variant; mixed variants raise VariantMismatch.
    """
    _require_variant(kernel, tuning_x, tuning_y)
    return kernel.coupled_step(x, tuning_x, y, tuning_y, stream)
