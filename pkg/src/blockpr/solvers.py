"""Pluggable base phase-retrieval solvers.

Three solvers share one calling convention (measurements in, estimate and
:class:`SolverReport` out, explicit seed):

* :func:`wf_solve` -- truncated Wirtinger-flow gradient descent on
  intensity measurements, spectrally initialized.
* :func:`altproj_solve` -- alternating projections on magnitude
  measurements, alternating between the data modulus constraint and the
  operator range via a precomputed least-squares factorization.
* :func:`unit_modulus_tune` -- alternating projections specialized to
  unit-modulus unknowns (the per-block phase factors), renormalizing each
  entry to the unit circle after every update.

Every solver is a pure function of (problem, params, seed): restarts use
seeds derived with :func:`blockpr.rng.mix_seed`, the winner is the restart
with the lowest final residual (ties to the lowest restart index), and a
restart that reaches the tolerance stops the restart loop early. Residuals
are the relative magnitude misfit of :func:`blockpr.forward.residual`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
import scipy.linalg

from .core import KRBDMatrix, Operator, PRInstance, as_complex_vector
from .forward import magnitudes_from_intensity
from .rng import complex_normal, generator, mix_seed

__all__ = [
    "APParams",
    "LeastSquaresOperator",
    "NonProgress",
    "RankDeficient",
    "SolverReport",
    "SolverSpec",
    "WFParams",
    "altproj_solve",
    "pinv_factor",
    "solve_pr",
    "spectral_init",
    "unit_modulus_tune",
    "wf_solve",
]

SolverKind = Literal["wf_truncated", "alt_proj", "unit_modulus_tuner"]


class RankDeficient(ValueError):
    """Operator is rank-deficient within the factorization tolerance."""


class NonProgress(RuntimeError):
    """Gradient truncation rejected every measurement for 10 consecutive iterations."""


@dataclass(frozen=True)
class WFParams:
    """Truncated Wirtinger-flow parameters.

    The truncation thresholds and step size follow common TWF conventions
    and are freely tunable; they are not calibrated against any external
    implementation.

    ``loss`` selects the residual weighting: "poisson" divides each
    residual by its own |v_r|^2 (the classical TWF likelihood weight),
    "gaussian" divides by mean(b), which is the variance-matched choice
    when i.i.d. Gaussian noise sits on the intensities and reaches a
    noticeably lower error floor there. The gaussian weighting has a
    stiffer effective curvature; use step_size <= 0.15 with it.
    """

    max_iters: int = 400
    step_size: float = 0.2
    init_power_iters: int = 100
    # keeps rows with b_r <= trunc_y * mean(b); 9 = 3^2, the usual squared-form
    # threshold, which barely truncates exponential-tailed complex intensities
    trunc_y: float = 9.0
    trunc_lb: float = 0.3
    trunc_ub: float = 5.0
    trunc_h: float = 5.0
    tol: float = 1e-8
    loss: Literal["poisson", "gaussian"] = "poisson"

    def __post_init__(self):
        for name in ("max_iters", "step_size", "init_power_iters", "trunc_y",
                     "trunc_lb", "trunc_ub", "trunc_h", "tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.trunc_lb >= self.trunc_ub:
            raise ValueError("trunc_lb must be < trunc_ub")
        if self.loss not in ("poisson", "gaussian"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class APParams:
    """Alternating-projections parameters.

    Besides the tolerance and iteration cap, a run stops once it stalls:
    if the residual improved by less than ``stall_rtol`` (relatively) over
    the last ``stall_window`` iterations the plateau has been reached and
    further projections are wasted work (typical on noisy data, where
    ``tol`` is unreachable). ``stall_window = 0`` disables the check.
    """

    max_iters: int = 600
    tol: float = 1e-10
    init: Literal["random", "spectral"] = "random"
    stall_window: int = 50
    stall_rtol: float = 1e-3

    def __post_init__(self):
        if self.max_iters <= 0 or self.tol <= 0:
            raise ValueError("max_iters and tol must be positive")
        if self.init not in ("random", "spectral"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.stall_window < 0 or self.stall_rtol < 0:
            raise ValueError("stall parameters must be nonnegative")


SolverParams = Union[WFParams, APParams]


@dataclass(frozen=True)
class SolverSpec:
    """Which base solver to run, with which parameters, seed, and restarts."""

    kind: SolverKind
    params: SolverParams | None = None
    seed: int = 0
    restarts: int = 1

    def __post_init__(self):
        if self.kind not in ("wf_truncated", "alt_proj", "unit_modulus_tuner"):
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class SolverReport:
    """Per-run diagnostics of a solver invocation.

    ``residuals`` traces the winning restart (entry 0 is the initial
    residual for wf_solve, and each subsequent entry follows one update).
    """

    iterations: int
    final_residual: float
    restarts_used: int
    wall_time_seconds: float
    converged: bool
    residuals: tuple[float, ...] = ()

    def __post_init__(self):
        if self.final_residual < 0:
            raise ValueError("final_residual must be >= 0")


class _LinOp:
    """Uniform matvec / adjoint-matvec view over dense and KRBD operators."""

    def __init__(self, op: Operator):
        self._krbd = isinstance(op, KRBDMatrix)
        self.op = op
        if self._krbd:
            self.shape = op.shape
            self._adjoints = tuple(np.ascontiguousarray(b.conj().T) for b in op.blocks)
            self._row_slices = op.partition.row_slices()
            self._col_slices = op.partition.col_slices()
            norms = [np.linalg.norm(b, axis=1) for b in op.blocks]
            self.row_norms = np.concatenate(norms)
        else:
            self.shape = op.shape
            self._hh = np.ascontiguousarray(op.conj().T)
            self.row_norms = np.linalg.norm(op, axis=1)

    def matvec(self, z: np.ndarray) -> np.ndarray:
        if not self._krbd:
            return self.op @ z
        out = np.empty(self.shape[0], dtype=np.complex128)
        for b, rs, cs in zip(self.op.blocks, self._row_slices, self._col_slices):
            out[rs] = b @ z[cs]
        return out

    def rmatvec(self, w: np.ndarray) -> np.ndarray:
        if not self._krbd:
            return self._hh @ w
        out = np.empty(self.shape[1], dtype=np.complex128)
        for bh, rs, cs in zip(self._adjoints, self._row_slices, self._col_slices):
            out[cs] = bh @ w[rs]
        return out


def spectral_init(op: Operator, b: np.ndarray, params: WFParams, seed: int) -> np.ndarray:
    """Spectral starting point from intensity measurements.

    Runs ``init_power_iters`` power iterations (from a seeded random start)
    on the truncated weighted covariance (1/M) sum_{r in T} b_r h_r h_r^H,
    T = {r : b_r <= trunc_y * mean(b)}, then scales the unit eigenvector v
    to ||z0|| = sqrt(N * mean(b) / mean(||h_r||^2)) so that ||z0||^2
    estimates the signal energy.
    """
    lin = _LinOp(op)
    m, n = lin.shape
    b = np.asarray(b, dtype=np.float64)
    if len(b) != m:
        raise ValueError(f"got {len(b)} measurements for {m} rows")
    mean_b = float(np.mean(b))
    if not np.any(b > 0):
        raise ValueError("zero measurement vector")
    w = np.where(b <= params.trunc_y * mean_b, b, 0.0) / m
    v = complex_normal(generator(seed), n)
    v /= np.linalg.norm(v)
    for _ in range(params.init_power_iters):
        v = lin.rmatvec(lin.matvec(v) * w)
        nv = np.linalg.norm(v)
        if nv == 0:
            # truncated covariance annihilated the iterate; restart direction
            v = np.ones(n, dtype=np.complex128)
            nv = np.linalg.norm(v)
        v /= nv
    scale = math.sqrt(n * mean_b / float(np.mean(lin.row_norms**2)))
    return scale * v


def _finish(z, resid, iterations, restarts_used, t0, tol, trace):
    report = SolverReport(
        iterations=iterations,
        final_residual=resid,
        restarts_used=restarts_used,
        wall_time_seconds=time.perf_counter() - t0,
        converged=resid <= tol,
        residuals=tuple(trace),
    )
    return z, report


def wf_solve(
    instance: PRInstance,
    params: WFParams | None = None,
    seed: int = 0,
    restarts: int = 1,
    z0: np.ndarray | None = None,
) -> tuple[np.ndarray, SolverReport]:
    """Truncated Wirtinger flow on intensity measurements.

    Gradient update (v = H z, b the intensities, mu the step size):

        z <- z - (mu / M) * sum_{r in E} 2 * (|v_r|^2 - b_r) / |v_r|^2 * v_r * conj(h_r)

    where E keeps row r only if the normalized projection magnitude
    sqrt(N) |v_r| / (||h_r|| ||z||) lies in [trunc_lb, trunc_ub] and the
    data deviation |b_r - |v_r|^2| is at most
    (trunc_h / M) ||b - |Hz|^2||_1 times that magnitude. With
    ``loss="gaussian"`` the |v_r|^2 denominator becomes mean(b) (see
    :class:`WFParams`). Stops when the relative magnitude residual reaches
    ``tol``. If ``z0`` is given it is used as the starting point (restarts
    collapse to a single run). Raises :class:`NonProgress` if E stays
    empty for 10 iterations.
    """
    params = params or WFParams()
    if instance.kind != "intensity":
        raise ValueError("wf_solve consumes intensity measurements")
    t0 = time.perf_counter()
    b = instance.measurements
    lin = _LinOp(instance.operator)
    m, n = lin.shape
    a = magnitudes_from_intensity(b)
    norm_a = float(np.linalg.norm(a))
    if norm_a == 0:
        raise ValueError("zero measurement vector")
    mu = params.step_size
    mean_b = float(np.mean(b))

    if z0 is not None:
        z0 = as_complex_vector(z0)
        if len(z0) != n:
            raise ValueError(f"z0 has length {len(z0)}, expected {n}")
        restarts = 1

    best = None
    restarts_used = 0
    for r in range(restarts):
        restarts_used = r + 1
        if z0 is not None:
            z = z0.copy()
        else:
            z = spectral_init(instance.operator, b, params, mix_seed(seed, r))
        v = lin.matvec(z)
        resid = float(np.linalg.norm(np.abs(v) - a)) / norm_a
        trace = [resid]
        iterations = 0
        empty_streak = 0
        while resid > params.tol and iterations < params.max_iters:
            absv = np.abs(v)
            absv2 = absv * absv
            znorm = float(np.linalg.norm(z))
            if znorm == 0:
                ratio = np.zeros(m)
            else:
                ratio = math.sqrt(n) * absv / (lin.row_norms * znorm)
            dev = np.abs(b - absv2)
            keep = (
                (ratio >= params.trunc_lb)
                & (ratio <= params.trunc_ub)
                & (dev <= (params.trunc_h / m) * float(np.sum(dev)) * ratio)
            )
            iterations += 1
            if not keep.any():
                empty_streak += 1
                if empty_streak >= 10:
                    raise NonProgress(
                        f"empty truncation set for {empty_streak} consecutive iterations"
                    )
                trace.append(resid)
                continue
            empty_streak = 0
            coeff = np.zeros(m)
            if params.loss == "poisson":
                np.divide(2.0 * (absv2 - b), absv2, out=coeff, where=keep)
            else:
                np.multiply(2.0 * (absv2 - b), keep / mean_b, out=coeff)
            z = z - (mu / m) * lin.rmatvec(coeff * v)
            v = lin.matvec(z)
            resid = float(np.linalg.norm(np.abs(v) - a)) / norm_a
            trace.append(resid)
        if best is None or resid < best[1]:
            best = (z, resid, iterations, trace)
        if resid <= params.tol:
            break

    z, resid, iterations, trace = best
    return _finish(z, resid, iterations, restarts_used, t0, params.tol, trace)


class LeastSquaresOperator:
    """Precomputed solver for min_z ||H z - v||_2 over a fixed tall matrix H.

    Backed by an economy QR factorization; raises :class:`RankDeficient`
    when the R diagonal signals rank deficiency within 1e-10 relative
    tolerance.
    """

    def __init__(self, matrix: np.ndarray):
        h = np.asarray(matrix, dtype=np.complex128)
        if h.ndim != 2:
            raise ValueError("expected a 2-D matrix")
        if h.shape[0] < h.shape[1]:
            raise ValueError(f"need rows >= cols, got {h.shape}")
        self.matrix = h
        q, r = scipy.linalg.qr(h, mode="economic", check_finite=False)
        diag = np.abs(np.diagonal(r))
        if diag.min() <= 1e-10 * diag.max():
            raise RankDeficient(
                f"matrix of shape {h.shape} is rank-deficient within tolerance"
            )
        self._qh = np.ascontiguousarray(q.conj().T)
        self._r = r

    def solve(self, v: np.ndarray) -> np.ndarray:
        return scipy.linalg.solve_triangular(
            self._r, self._qh @ v, lower=False, check_finite=False
        )


def pinv_factor(op: np.ndarray) -> LeastSquaresOperator:
    """Factor a tall dense matrix once for repeated least-squares solves."""
    if isinstance(op, KRBDMatrix):
        raise TypeError("pinv_factor expects a dense matrix; densify the operator first")
    return LeastSquaresOperator(op)


def _phases(v: np.ndarray) -> np.ndarray:
    absv = np.abs(v)
    out = np.ones_like(v)
    np.divide(v, absv, out=out, where=absv > 0)  # phase(0) = 1 convention
    return out


def _stalled(trace: list[float], params: APParams) -> bool:
    w = params.stall_window
    if w == 0 or len(trace) <= w:
        return False
    r_old = trace[-1 - w]
    return r_old > 0 and (r_old - trace[-1]) < params.stall_rtol * r_old


def altproj_solve(
    instance: PRInstance,
    params: APParams | None = None,
    seed: int = 0,
    restarts: int = 1,
    z0: np.ndarray | None = None,
) -> tuple[np.ndarray, SolverReport]:
    """Alternating projections on magnitude measurements.

    Iterates v <- a * phase(H z), z <- argmin ||H z - v|| until the
    relative residual reaches ``tol``. The residual sequence is
    non-increasing (each step projects onto the modulus set, then onto the
    operator range). An all-zero ``a`` short-circuits to z = 0, converged.
    """
    params = params or APParams()
    if instance.kind != "magnitude":
        raise ValueError("altproj_solve consumes magnitude measurements")
    t0 = time.perf_counter()
    op = instance.operator
    if isinstance(op, KRBDMatrix):
        raise TypeError("altproj_solve expects a dense operator; densify or solve per block")
    a = instance.measurements
    m, n = op.shape
    if float(np.linalg.norm(a)) == 0:
        return _finish(np.zeros(n, dtype=np.complex128), 0.0, 0, 0, t0, params.tol, [0.0])
    lsq = pinv_factor(op)
    norm_a = float(np.linalg.norm(a))

    if z0 is not None:
        z0 = as_complex_vector(z0)
        if len(z0) != n:
            raise ValueError(f"z0 has length {len(z0)}, expected {n}")
        restarts = 1

    best = None
    restarts_used = 0
    for r in range(restarts):
        restarts_used = r + 1
        if z0 is not None:
            z = z0.copy()
        elif params.init == "spectral":
            z = spectral_init(op, a * a, WFParams(), mix_seed(seed, r))
        else:
            z = complex_normal(generator(mix_seed(seed, r)), n)
        trace = []
        resid = math.inf
        iterations = 0
        hz = op @ z
        for _ in range(params.max_iters):
            z = lsq.solve(a * _phases(hz))
            hz = op @ z
            resid = float(np.linalg.norm(np.abs(hz) - a)) / norm_a
            iterations += 1
            trace.append(resid)
            if resid <= params.tol or _stalled(trace, params):
                break
        if best is None or resid < best[1]:
            best = (z, resid, iterations, trace)
        if resid <= params.tol:
            break

    z, resid, iterations, trace = best
    return _finish(z, resid, iterations, restarts_used, t0, params.tol, trace)


def unit_modulus_tune(
    tuning_matrix: np.ndarray,
    y_t: np.ndarray,
    params: APParams | None = None,
    seed: int = 0,
    restarts: int = 50,
) -> tuple[np.ndarray, SolverReport]:
    """Recover unit-modulus phase factors d from y_t = |B d|.

    Alternating projections as in :func:`altproj_solve`, but after every
    least-squares update each entry is pulled back to the unit circle
    (entries with modulus < 1e-14 reset to 1), so the output always has
    |d_i| = 1. The default 50 restarts reflect how small and cheap the
    tuning problem is. A zero y_t returns all-ones, flagged non-converged.
    """
    params = params or APParams()
    b_mat = np.asarray(tuning_matrix, dtype=np.complex128)
    y_t = np.asarray(y_t, dtype=np.float64)
    t0 = time.perf_counter()
    if b_mat.ndim != 2:
        raise ValueError("tuning matrix must be 2-D")
    ell, k = b_mat.shape
    if len(y_t) != ell:
        raise ValueError(f"got {len(y_t)} tuning measurements for {ell} rows")
    norm_y = float(np.linalg.norm(y_t))
    if norm_y == 0:
        d = np.ones(k, dtype=np.complex128)
        return _finish(d, math.inf, 0, 0, t0, params.tol, [])
    lsq = pinv_factor(b_mat)

    def renorm(d: np.ndarray) -> np.ndarray:
        absd = np.abs(d)
        out = np.ones_like(d)
        np.divide(d, absd, out=out, where=absd >= 1e-14)
        return out

    best = None
    restarts_used = 0
    for r in range(restarts):
        restarts_used = r + 1
        d = renorm(complex_normal(generator(mix_seed(seed, r)), k))
        bd = b_mat @ d
        trace = []
        resid = math.inf
        iterations = 0
        for _ in range(params.max_iters):
            d = renorm(lsq.solve(y_t * _phases(bd)))
            bd = b_mat @ d
            resid = float(np.linalg.norm(np.abs(bd) - y_t)) / norm_y
            iterations += 1
            trace.append(resid)
            if resid <= params.tol or _stalled(trace, params):
                break
        if best is None or resid < best[1]:
            best = (d, resid, iterations, trace)
        if resid <= params.tol:
            break

    d, resid, iterations, trace = best
    return _finish(d, resid, iterations, restarts_used, t0, params.tol, trace)


def _as_kind(instance: PRInstance, kind: str) -> PRInstance:
    if instance.kind == kind:
        return instance
    if kind == "intensity":
        meas = instance.measurements**2
    else:
        meas = magnitudes_from_intensity(instance.measurements)
    return PRInstance(instance.operator, meas, kind, instance.snr_db)


def solve_pr(instance: PRInstance, spec: SolverSpec) -> tuple[np.ndarray, SolverReport]:
    """Run the solver selected by ``spec``, converting the measurement kind.

    Intensity-to-magnitude conversion takes the square root of the clamped
    intensities; magnitude-to-intensity squares (exact on noiseless data).
    """
    if spec.kind == "wf_truncated":
        params = spec.params if isinstance(spec.params, WFParams) else WFParams()
        return wf_solve(_as_kind(instance, "intensity"), params, spec.seed, spec.restarts)
    params = spec.params if isinstance(spec.params, APParams) else APParams()
    inst = _as_kind(instance, "magnitude")
    if spec.kind == "alt_proj":
        return altproj_solve(inst, params, spec.seed, spec.restarts)
    op = inst.operator
    if isinstance(op, KRBDMatrix):
        raise TypeError("unit_modulus_tuner expects a dense system")
    return unit_modulus_tune(op, inst.measurements, params, spec.seed, spec.restarts)
