"""Time integration for the semidiscrete Gross-Pitaevskii system.

Two implicit one-step schemes act on the complex coefficient vector:

* ``irk``: the one-stage Gauss-Legendre implicit Runge-Kutta scheme of
  Crank-Nicolson type.  All forms are evaluated at the state midpoint
  (u^n + u^{n-1}) / 2, which makes the discrete mass exactly conserved
  whenever Im(kappa) = 0.
* ``be``: fully implicit backward Euler.  Unconditionally stable but
  dissipative; mass and energy decay.

``irk_regularized`` replaces the plain cubic by its truncated version and
coincides with ``irk`` whenever all Newton iterates stay below the cutoff.

The nonlinear systems are solved with an exact Newton method on the
real/imaginary split of the unknowns (the cubic term is not complex
differentiable).  Each step must hit the configured residual tolerance or
fail loudly; there is no silent continuation and no automatic step halving.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics
from .assembly import AssembledSystem, ComplexField
from .mesh import log_factor
from .regularizer import TruncatedCubic

_SCHEME_ALIASES = {
    "irk": "irk",
    "crank_nicolson": "irk",
    "be": "be",
    "backward_euler": "be",
    "irk_regularized": "irk_regularized",
}


class StepperError(RuntimeError):
    pass


class StepFailure(StepperError):
    """Newton did not reach the residual tolerance within max_iter."""

    def __init__(self, message, last_iterate=None, residual_history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_history = residual_history or []


@dataclass
class StepperConfig:
    scheme: str = "irk"
    tau: float | None = None
    t_final: float | None = None
    schedule: Sequence[float] | None = None  # explicit per-step sizes
    newton_tol: float = 1e-8
    newton_max_iter: int = 50
    record_every: int = 1
    cutoff: float | None = None              # truncation amplitude M
    predictor: bool = False                  # extrapolated Newton initial guess
    linear_solver: str = "direct"            # "direct" or "jacobi_gmres"

    def __post_init__(self):
        self.scheme = _SCHEME_ALIASES.get(self.scheme, self.scheme)
        if self.scheme not in ("irk", "be", "irk_regularized"):
            raise StepperError(f"unknown scheme {self.scheme!r}")
        if self.schedule is None:
            if self.tau is None or self.tau <= 0:
                raise StepperError("tau must be positive")
        if self.newton_tol <= 0:
            raise StepperError("newton_tol must be positive")
        if self.scheme == "irk_regularized" and (
            self.cutoff is None or self.cutoff <= 0
        ):
            raise StepperError("irk_regularized needs a positive cutoff")

    def step_sizes(self) -> np.ndarray:
        if self.schedule is not None:
            taus = np.asarray(self.schedule, dtype=float)
            if np.any(taus <= 0):
                raise StepperError("schedule contains nonpositive steps")
            return taus
        if self.t_final is None or self.t_final < 0:
            raise StepperError("t_final must be nonnegative")
        if self.t_final == 0:
            return np.array([])
        n = self.t_final / self.tau
        if abs(n - round(n)) > 1e-12 * max(1.0, n):
            raise StepperError(
                f"t_final = {self.t_final} is not an integer multiple of tau = {self.tau}"
            )
        return np.full(int(round(n)), self.tau)


@dataclass
class StepResult:
    field: ComplexField
    newton_iters: int
    final_residual: float
    mass: float
    energy: float


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norms: list
    converged: bool


@dataclass
class RunResult:
    results: list            # StepResult snapshots at the recording cadence
    records: list            # DiagnosticsRecord per recorded step
    failed: bool = False
    failure: StepFailure | None = None
    coupling_indicator: float | None = None  # ell_h * (h_max + tau^2), advisory


def uniqueness_bound(M: float, kappa_im_sup: float, beta: float) -> float:
    """Largest step size below which the regularized step has a unique solution.

    Returns 2 / (sup|Im kappa| + 10 beta M^2); infinite when the
    denominator vanishes.
    """
    denom = kappa_im_sup + 10.0 * beta * M**2
    if denom == 0.0:
        return math.inf
    return 2.0 / denom


# ---------------------------------------------------------------------------
# Newton on the real/imaginary split
# ---------------------------------------------------------------------------

def _c2r(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def _r2c(x: np.ndarray) -> np.ndarray:
    n = len(x) // 2
    return x[:n] + 1j * x[n:]


def _real_split(C: sp.spmatrix) -> sp.csr_matrix:
    C = C.tocsr()
    return sp.bmat([[C.real, -C.imag], [C.imag, C.real]], format="csr")


def _imag_unit_block(n: int) -> sp.csr_matrix:
    I = sp.identity(n, format="csr")
    return sp.bmat([[None, -I], [I, None]], format="csr")


def _make_linear_solve(linear_solver: str):
    if linear_solver == "direct":
        def solve(J, rhs):
            return spla.splu(J.tocsc()).solve(rhs)
        return solve
    if linear_solver == "jacobi_gmres":
        def solve(J, rhs):
            diag = J.diagonal()
            if np.any(diag == 0):
                raise StepperError("zero diagonal; Jacobi preconditioner unavailable")
            precond = spla.LinearOperator(J.shape, lambda x: x / diag)
            x, info = spla.gmres(J, rhs, rtol=1e-12, atol=0.0, M=precond,
                                 maxiter=2000)
            if info != 0:
                raise StepperError(f"GMRES did not converge (info = {info})")
            return x
        return solve
    raise StepperError(f"unknown linear solver {linear_solver!r}")


def newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], sp.spmatrix],
    initial: np.ndarray,
    tol: float,
    max_iter: int,
    linear_solver: str = "direct",
) -> NewtonResult:
    """Exact Newton iteration with residual-decrease backtracking.

    Returns once the residual 2-norm drops to ``tol``.  An affine residual
    converges in exactly one iteration; a zero initial residual returns
    immediately with zero iterations.
    """
    solve = _make_linear_solve(linear_solver)
    x = np.asarray(initial, dtype=float).copy()
    r = residual_fn(x)
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    if rnorm <= tol:
        return NewtonResult(x, 0, history, True)

    for _ in range(max_iter):
        dx = solve(jacobian_fn(x), -r)
        lam = 1.0
        for _ in range(12):
            x_new = x + lam * dx
            r_new = residual_fn(x_new)
            rnorm_new = float(np.linalg.norm(r_new))
            if rnorm_new <= tol or rnorm_new <= (1.0 - 1e-4 * lam) * rnorm:
                break
            lam *= 0.5
        x, r, rnorm = x_new, r_new, rnorm_new
        history.append(rnorm)
        if rnorm <= tol:
            return NewtonResult(x, len(history) - 1, history, True)
    return NewtonResult(x, len(history) - 1, history, False)


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def _scheme_matrices(systems: AssembledSystem, scheme: str, tau: float):
    """Constant complex matrix M + i tau_eff (S + K) and its real split, cached."""
    key = ("const", scheme, float(tau))
    if key not in systems._cache:
        factor = 0.5 * tau if scheme.startswith("irk") else tau
        C = (systems.mass + (1j * factor) * (systems.operator + systems.kappa)).tocsr()
        systems._cache[key] = C
    return systems._cache[key]


def _linear_solver_for(systems: AssembledSystem, scheme: str, tau: float):
    key = ("splu", scheme, float(tau))
    if key not in systems._cache:
        C = _scheme_matrices(systems, scheme, tau)
        systems._cache[key] = spla.splu(C.tocsc())
    return systems._cache[key]


def _step_result(systems, values, tau, t_prev, iters, residual) -> StepResult:
    u = ComplexField(values, systems.dofmap, time_tag=t_prev + tau)
    return StepResult(
        field=u,
        newton_iters=iters,
        final_residual=residual,
        mass=diagnostics.mass(u, systems.mass),
        energy=diagnostics.system_energy(u, systems),
    )


def _forcing_term(systems, forcing, scheme, tau, t_prev):
    if forcing is None:
        return None
    t_eval = t_prev + (0.5 * tau if scheme.startswith("irk") else tau)
    return systems.forcing_load(forcing, t_eval)


def _linear_step(systems, scheme, u_prev, tau, config, load, t_prev) -> StepResult:
    """Direct solve for beta = 0: Newton on an affine map needs one solve."""
    C = _scheme_matrices(systems, scheme, tau)
    lu = _linear_solver_for(systems, scheme, tau)
    if scheme == "irk":
        # (M - i tau/2 (S+K)) u_prev, written via C = M + i tau/2 (S+K)
        rhs = 2.0 * systems.mass @ u_prev.values - C @ u_prev.values
    else:
        rhs = systems.mass @ u_prev.values
    if load is not None:
        rhs = rhs - 1j * tau * load
    w = lu.solve(rhs)
    residual = float(np.linalg.norm(C @ w - rhs))
    iters = 1
    for _ in range(3):
        if residual <= config.newton_tol:
            break
        w = w + lu.solve(rhs - C @ w)
        residual = float(np.linalg.norm(C @ w - rhs))
        iters += 1
    if residual > config.newton_tol:
        raise StepFailure(
            f"linear step stalled at residual {residual:.3e} > tol {config.newton_tol:.3e}",
            last_iterate=w,
            residual_history=[residual],
        )
    return _step_result(systems, w, tau, t_prev, iters, residual)


def _nonlinear_step(
    systems, scheme, u_prev, tau, config, profile, load, t_prev, guess
) -> StepResult:
    C = _scheme_matrices(systems, scheme, tau)
    key = ("rsplit", scheme, float(tau))
    if key not in systems._cache:
        systems._cache[key] = _real_split(C)
    rs_const = systems._cache[key]
    n = systems.dofmap.n_dofs
    B = _imag_unit_block(n)
    midpoint = scheme.startswith("irk")
    # the cubic evaluators carry beta already; the midpoint stage adds 1/2
    jac_factor = tau * (0.5 if midpoint else 1.0)

    if midpoint:
        rhs_vec = 2.0 * systems.mass @ u_prev.values - C @ u_prev.values
    else:
        rhs_vec = systems.mass @ u_prev.values
    if load is not None:
        rhs_vec = rhs_vec - 1j * tau * load

    def stage(w):
        return 0.5 * (w + u_prev.values) if midpoint else w

    def residual_fn(x):
        w = _r2c(x)
        u_stage = ComplexField(stage(w), systems.dofmap)
        r = C @ w - rhs_vec + 1j * tau * systems.cubic_residual(u_stage, profile)
        return _c2r(r)

    def jacobian_fn(x):
        w = _r2c(x)
        u_stage = ComplexField(stage(w), systems.dofmap)
        J_N = systems.cubic_jacobian(u_stage, profile)
        return rs_const + jac_factor * (B @ J_N)

    result = newton_solve(
        residual_fn,
        jacobian_fn,
        _c2r(guess),
        tol=config.newton_tol,
        max_iter=config.newton_max_iter,
        linear_solver=config.linear_solver,
    )
    if not result.converged:
        raise StepFailure(
            f"Newton stalled after {result.iterations} iterations at residual "
            f"{result.residual_norms[-1]:.3e} (tol {config.newton_tol:.3e})",
            last_iterate=_r2c(result.x),
            residual_history=result.residual_norms,
        )
    return _step_result(
        systems, _r2c(result.x), tau, t_prev, result.iterations,
        result.residual_norms[-1],
    )


def irk_step(
    u_prev: ComplexField,
    tau: float,
    systems: AssembledSystem,
    config: StepperConfig,
    forcing: Callable = None,
    t_prev: float = 0.0,
    guess: np.ndarray | None = None,
) -> StepResult:
    """One implicit-midpoint step of size tau starting from u_prev."""
    load = _forcing_term(systems, forcing, "irk", tau, t_prev)
    if systems.beta == 0.0:
        return _linear_step(systems, "irk", u_prev, tau, config, load, t_prev)
    g = u_prev.values if guess is None else guess
    return _nonlinear_step(
        systems, "irk", u_prev, tau, config, None, load, t_prev, g
    )


def backward_euler_step(
    u_prev: ComplexField,
    tau: float,
    systems: AssembledSystem,
    config: StepperConfig,
    forcing: Callable = None,
    t_prev: float = 0.0,
    guess: np.ndarray | None = None,
) -> StepResult:
    """One fully implicit endpoint step; dissipative by construction."""
    load = _forcing_term(systems, forcing, "be", tau, t_prev)
    if systems.beta == 0.0:
        return _linear_step(systems, "be", u_prev, tau, config, load, t_prev)
    g = u_prev.values if guess is None else guess
    return _nonlinear_step(
        systems, "be", u_prev, tau, config, None, load, t_prev, g
    )


def irk_regularized_step(
    u_prev: ComplexField,
    tau: float,
    systems: AssembledSystem,
    cutoff: float,
    config: StepperConfig,
    forcing: Callable = None,
    t_prev: float = 0.0,
    guess: np.ndarray | None = None,
) -> StepResult:
    """Implicit-midpoint step with the truncated cubic.

    Identical to ``irk_step`` whenever all Newton iterates stay below the
    cutoff in the sup norm.  Warns when tau reaches the uniqueness bound.
    """
    bound = uniqueness_bound(cutoff, systems.kappa_im_sup, systems.beta)
    if tau >= bound:
        warnings.warn(
            f"tau = {tau} >= uniqueness bound {bound:.6g}; the regularized "
            "step may have multiple solutions",
            stacklevel=2,
        )
    truncation = TruncatedCubic(cutoff)
    load = _forcing_term(systems, forcing, "irk", tau, t_prev)
    if systems.beta == 0.0:
        return _linear_step(systems, "irk", u_prev, tau, config, load, t_prev)
    g = u_prev.values if guess is None else guess
    return _nonlinear_step(
        systems, "irk", u_prev, tau, config, truncation.profile, load, t_prev, g
    )


# ---------------------------------------------------------------------------
# time loop
# ---------------------------------------------------------------------------

def _dispatch(scheme, u_prev, tau, systems, config, forcing, t_prev, guess):
    if scheme == "irk":
        return irk_step(u_prev, tau, systems, config, forcing, t_prev, guess)
    if scheme == "be":
        return backward_euler_step(u_prev, tau, systems, config, forcing, t_prev, guess)
    return irk_regularized_step(
        u_prev, tau, systems, config.cutoff, config, forcing, t_prev, guess
    )


def run(
    u0: ComplexField,
    config: StepperConfig,
    systems: AssembledSystem,
    forcing: Callable = None,
    sink: Callable = None,
) -> RunResult:
    """March the configured scheme from u0 and collect diagnostics.

    Snapshots and diagnostics records are taken every ``record_every`` steps
    (the final step is always recorded).  On a step failure the partial
    trajectory is returned with the failure attached.
    """
    taus = config.step_sizes()
    t = 0.0
    u = u0.copy(time_tag=0.0)
    first = StepResult(
        field=u,
        newton_iters=0,
        final_residual=0.0,
        mass=diagnostics.mass(u, systems.mass),
        energy=diagnostics.system_energy(u, systems),
    )
    results = [first]
    records = [
        diagnostics.DiagnosticsRecord(0, 0.0, first.mass, first.energy, 0, 0.0)
    ]
    if sink is not None:
        sink(records[0])

    coupling = None
    if len(taus):
        try:
            coupling = float(
                log_factor(systems.mesh) * (systems.mesh.h_max + taus.max() ** 2)
            )
        except Exception:
            coupling = None  # coarse meshes with h_min >= 1 have no log factor

    prev_values = None
    for k, tau in enumerate(taus, start=1):
        guess = None
        if config.predictor and prev_values is not None:
            guess = 2.0 * u.values - prev_values
        try:
            step = _dispatch(
                config.scheme, u, tau, systems, config, forcing, t, guess
            )
        except StepFailure as failure:
            return RunResult(
                results=results,
                records=records,
                failed=True,
                failure=failure,
                coupling_indicator=coupling,
            )
        prev_values = u.values
        u = step.field
        t += tau
        if k % config.record_every == 0 or k == len(taus):
            record = diagnostics.DiagnosticsRecord(
                k, t, step.mass, step.energy, step.newton_iters, step.final_residual
            )
            records.append(record)
            results.append(step)
            if sink is not None:
                sink(record)
    return RunResult(
        results=results, records=records, coupling_indicator=coupling
    )
