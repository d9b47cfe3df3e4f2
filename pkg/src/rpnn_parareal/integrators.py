"""Classical one-step fine integrators and their composition over subintervals.

Two steppers are provided: the classical explicit RK4 scheme and implicit
Euler solved by a plain Newton iteration with the exact Jacobian.  Both are
pure functions of their inputs, so propagation over distinct subintervals can
run concurrently without coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .problems import OdeSystem

# Relative slack when checking that an interval length is an integer multiple
# of the fine step.  Float division artifacts in the benchmark meshes reach
# ~200 ulp (measured), so a strict half-ulp check would reject them.
_STEP_COUNT_RTOL = 1e-9


class SolverError(Exception):
    """Base class for numerical failures raised by this package."""


class StepFailure(SolverError):
    """A single step produced a non-finite value."""

    def __init__(self, message: str, stage: int | None = None, interval: int | None = None):
        super().__init__(message)
        self.stage = stage
        self.interval = interval


class NewtonNonconvergence(SolverError):
    """Newton failed to reach the requested residual within max_iter."""

    def __init__(self, message: str, residual: float, interval: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.interval = interval


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-12
    max_iter: int = 50

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("newton tol must be positive")
        if self.max_iter < 1:
            raise ValueError("newton max_iter must be >= 1")


@dataclass(frozen=True)
class FineMethod:
    """Fine propagator description: stepper kind and fine step size."""

    kind: str = "rk4"
    dt: float = 1e-2
    newton: NewtonOptions = dc_field(default_factory=NewtonOptions)

    def __post_init__(self):
        if self.kind not in ("rk4", "implicit-euler"):
            raise ValueError(f"unknown fine method kind {self.kind!r}")
        if not self.dt > 0:
            raise ValueError("fine step must be positive")


def rk4_step(system: OdeSystem, x: np.ndarray, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of size h."""
    if not h > 0:
        raise ValueError("step size must be positive")
    k1 = system.field(x)
    if not np.all(np.isfinite(k1)):
        raise StepFailure("non-finite RK4 stage", stage=1)
    k2 = system.field(x + (0.5 * h) * k1)
    if not np.all(np.isfinite(k2)):
        raise StepFailure("non-finite RK4 stage", stage=2)
    k3 = system.field(x + (0.5 * h) * k2)
    if not np.all(np.isfinite(k3)):
        raise StepFailure("non-finite RK4 stage", stage=3)
    k4 = system.field(x + h * k3)
    if not np.all(np.isfinite(k4)):
        raise StepFailure("non-finite RK4 stage", stage=4)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise StepFailure("non-finite RK4 update", stage=5)
    return out


def implicit_euler_step(
    system: OdeSystem,
    x: np.ndarray,
    h: float,
    newton: NewtonOptions | None = None,
) -> np.ndarray:
    """One implicit Euler step: solve y = x + h*F(y) by Newton from y0 = x.

    The iteration uses the exact Jacobian I - h*DF(y) and a dense solve; it
    terminates when ||y - x - h F(y)|| <= tol * (1 + ||x||), and raises
    NewtonNonconvergence rather than silently accepting a stale iterate.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    opts = newton or NewtonOptions()
    eye = np.eye(system.dim)
    threshold = opts.tol * (1.0 + float(np.linalg.norm(x)))
    y = x
    residual = y - x - h * system.field(y)
    res_norm = float(np.linalg.norm(residual))
    for _ in range(opts.max_iter):
        if res_norm <= threshold:
            return y
        jac = eye - h * system.jacobian(y)
        try:
            delta = np.linalg.solve(jac, residual)
        except np.linalg.LinAlgError as exc:
            raise NewtonNonconvergence(
                f"singular Newton matrix at residual {res_norm:.3e}", res_norm
            ) from exc
        y = y - delta
        if not np.all(np.isfinite(y)):
            raise NewtonNonconvergence("Newton iterate became non-finite", res_norm)
        residual = y - x - h * system.field(y)
        res_norm = float(np.linalg.norm(residual))
    if res_norm <= threshold:
        return y
    raise NewtonNonconvergence(
        f"implicit Euler Newton stalled at residual {res_norm:.3e} "
        f"(tol {threshold:.3e}, {opts.max_iter} iterations)",
        res_norm,
    )


def step_count(length: float, dt: float) -> int:
    """Number of fine steps covering `length`, validating divisibility."""
    ratio = length / dt
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > _STEP_COUNT_RTOL * max(1.0, abs(ratio)):
        raise ValueError(
            f"interval length {length!r} is not an integer multiple of the "
            f"fine step {dt!r} (ratio {ratio!r})"
        )
    return count


def fine_propagate(
    system: OdeSystem, x: np.ndarray, length: float, method: FineMethod
) -> np.ndarray:
    """Advance the state over `length` with composed fine steps.

    `length` must be an integer multiple of the fine step.  The composition is
    deterministic for fixed inputs.
    """
    if not length > 0:
        raise ValueError("propagation length must be positive")
    steps = step_count(length, method.dt)
    y = np.asarray(x, dtype=float)
    if method.kind == "rk4":
        for _ in range(steps):
            y = rk4_step(system, y, method.dt)
    else:
        for _ in range(steps):
            y = implicit_euler_step(system, y, method.dt, method.newton)
    return y


def serial_solve(
    system: OdeSystem, x0: np.ndarray, mesh, method: FineMethod
) -> np.ndarray:
    """Sequential fine integration; returns states at all mesh nodes."""
    lengths = np.diff(np.asarray(mesh.nodes, dtype=float))
    out = np.empty((len(lengths) + 1, system.dim))
    out[0] = np.asarray(x0, dtype=float)
    for n, length in enumerate(lengths):
        try:
            out[n + 1] = fine_propagate(system, out[n], float(length), method)
        except SolverError as exc:
            exc.interval = n
            raise
    return out
