"""The masked functional F(gamma) = <<d[k] gamma, gamma>> and its gradient flow.

``d[k]`` is the covariant coboundary with the degree ``k-1`` block removed and
``delta[k]`` its adjoint (codifferential with the degree ``k`` block removed).
The gradient of F is ``(d[k] + delta[k]) gamma``; this operator is symmetric
and indefinite, so explicit Euler descent can blow up along its negative
eigendirections.  Divergence is reported through ``FlowDivergence``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .bundle import BundleData
from .calculus import (
    Cochain,
    GradedCochain,
    d_cov,
    delta_cov,
    inner,
    inner_k,
    masked_d,
    masked_delta,
    norm,
    norm_k,
    random_graded,
    zero_cochain,
)
from .mesh import TorusGrid

log = logging.getLogger(__name__)


class ProjectionError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class FlowDivergence(RuntimeError):
    """Raised when the flow norm exceeds the divergence bound; carries the partial trace."""

    def __init__(self, message: str, trace: FlowTrace, gamma: GradedCochain):
        super().__init__(message)
        self.trace = trace
        self.gamma = gamma


# -- constrained domain --------------------------------------------------------

@dataclass(frozen=True)
class TildeDomain:
    """Graded cochains with ``gamma_{k-2} = 0`` and ``delta gamma_{k+2} = 0``."""

    k: int
    tolerance: float = 1e-8

    def constraint_violation(self, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> tuple[float, float]:
        """(max |gamma_{k-2}|, ||delta gamma_{k+2}|| / ||gamma_{k+2}||)."""
        low = gamma.component(self.k - 2)
        low_max = float(np.abs(low.values).max()) if low is not None and low.values.size else 0.0
        high = gamma.component(self.k + 2)
        rel = 0.0
        if high is not None:
            nh = norm_k(grid, b, high)
            if nh > 0:
                rel = norm_k(grid, b, delta_cov(grid, b, high)) / nh
        return low_max, rel

    def contains(self, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> bool:
        low_max, rel = self.constraint_violation(grid, b, gamma)
        return low_max == 0.0 and rel <= self.tolerance


def conjugate_gradient(apply, rhs: Cochain, dot, rtol: float = 1e-10, maxiter: int = 1000) -> tuple[Cochain, float, bool]:
    """CG for a self-adjoint positive semi-definite operator under the pairing ``dot``.

    Returns (solution, relative residual, converged).
    """
    x = rhs * 0.0
    r = rhs
    bnorm = np.sqrt(dot(rhs, rhs))
    if bnorm == 0:
        return x, 0.0, True
    p = r
    rr = dot(r, r)
    for _ in range(maxiter):
        if np.sqrt(rr) <= rtol * bnorm:
            break
        Ap = apply(p)
        pAp = dot(p, Ap)
        if pAp <= 0:
            break
        step = rr / pAp
        x = x + step * p
        r = r - step * Ap
        rr_new = dot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    rel = float(np.sqrt(rr) / bnorm)
    return x, rel, rel <= rtol


def project_tilde(dom: TildeDomain, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> GradedCochain:
    """Zero degree k-2 and remove the exact part of degree k+2 that spoils co-closedness.

    The correction ``d eta`` solves ``delta d eta = delta gamma_{k+2}`` by CG
    at degree k+1.
    """
    k = dom.k
    out = gamma
    if gamma.component(k - 2) is not None:
        out = out.with_component(None, k - 2)
    high = gamma.component(k + 2)
    if high is None:
        return out
    rhs = delta_cov(grid, b, high)
    dot = lambda u, v: inner_k(grid, b, u, v)
    op = lambda eta: delta_cov(grid, b, d_cov(grid, b, eta))
    maxiter = 10 * grid.n_cells(k + 1)
    eta, rel, ok = conjugate_gradient(op, rhs, dot, rtol=1e-10, maxiter=maxiter)
    if not ok:
        raise ProjectionError(f"CG did not converge projecting degree {k + 2}: relative residual {rel:.3e}", rel)
    if norm_k(grid, b, eta) == 0:
        return out
    kept = high - d_cov(grid, b, eta)
    # below solver resolution the coclosed part is zero (no twisted cohomology)
    if norm_k(grid, b, kept) <= dom.tolerance * norm_k(grid, b, high):
        kept = zero_cochain(grid, b, k + 2)
    return out.with_component(kept)


# -- functional ----------------------------------------------------------------

def functional_F(k: int, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> float:
    return inner(grid, b, masked_d(k, grid, b, gamma), gamma)


def gradient_F(k: int, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> GradedCochain:
    return masked_d(k, grid, b, gamma) + masked_delta(k, grid, b, gamma)


def critical_residual(k: int, grid: TorusGrid, b: BundleData, gamma: GradedCochain) -> np.ndarray:
    """Per-degree L2 norm of ``d[k] gamma_{l-1} + delta[k] gamma_{l+1}`` for l = 0..n."""
    g = gradient_F(k, grid, b, gamma)
    out = np.zeros(grid.n + 1)
    for l, c in g.components.items():
        out[l] = norm_k(grid, b, c)
    return out


def extract_pk(k: int, gamma: GradedCochain, grid: TorusGrid | None = None, b: BundleData | None = None) -> Cochain:
    """Degree-k part of ``gamma``; a zero cochain (needs grid and bundle) when absent."""
    c = gamma.component(k)
    if c is not None:
        return c
    if grid is None or b is None:
        raise ValueError(f"gamma has no degree-{k} component; pass grid and bundle for a zero cochain")
    return zero_cochain(grid, b, k)


def estimate_operator_norm(k: int, grid: TorusGrid, b: BundleData, iters: int = 50, seed: int = 0) -> float:
    """Power iteration for the largest |eigenvalue| of ``d[k] + delta[k]``."""
    v = random_graded(grid, b, seed)
    v = v * (1.0 / norm(grid, b, v))
    est = 0.0
    for _ in range(iters):
        w = gradient_F(k, grid, b, v)
        est = norm(grid, b, w)
        if est == 0:
            return 0.0
        v = w * (1.0 / est)
    return est


# -- flow ----------------------------------------------------------------------

@dataclass
class FlowTrace:
    times: list[float] = field(default_factory=list)
    F_values: list[float] = field(default_factory=list)
    gradient_norms: list[float] = field(default_factory=list)
    residual_by_degree: list[np.ndarray] = field(default_factory=list)
    constraint_drift: list[float] = field(default_factory=list)
    step: float = 0.0
    status: str = "running"

    def record(self, t: float, F: float, gnorm: float, res: np.ndarray, drift: float) -> None:
        self.times.append(float(t))
        self.F_values.append(float(F))
        self.gradient_norms.append(float(gnorm))
        self.residual_by_degree.append(np.asarray(res, dtype=float))
        self.constraint_drift.append(float(drift))

    def __len__(self) -> int:
        return len(self.times)

    def check(self) -> None:
        n = len(self.times)
        if not (len(self.F_values) == len(self.gradient_norms) == len(self.residual_by_degree) == n):
            raise AssertionError("trace columns have unequal lengths")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise AssertionError("trace times are not strictly increasing")

    def rows(self):
        for j in range(len(self)):
            yield [j, self.times[j], self.F_values[j], self.gradient_norms[j], *self.residual_by_degree[j]]

    def to_csv(self, path: str | Path, n: int) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "time", "F", "grad_norm", *(f"residual_deg_{l}" for l in range(n + 1))])
            for row in self.rows():
                w.writerow([row[0], *(repr(float(x)) for x in row[1:])])


StructureProjector = Callable[[GradedCochain], GradedCochain]


@dataclass
class FlowParams:
    step: Union[float, str] = "auto"
    max_steps: int = 2000
    renormalize: bool = False
    project_each_step: bool = False
    structure_projector: StructureProjector | None = None
    tol: float = 1e-10
    divergence_factor: float = 1e6
    power_iters: int = 50
    seed: int = 0


def resolve_step(k: int, grid: TorusGrid, b: BundleData, params: FlowParams) -> float:
    if params.step != "auto":
        return float(params.step)
    rho = estimate_operator_norm(k, grid, b, iters=params.power_iters, seed=params.seed)
    return 0.9 / rho if rho > 0 else 1.0


def run_flow(
    k: int,
    grid: TorusGrid,
    b: BundleData,
    gamma0: GradedCochain,
    params: FlowParams | None = None,
) -> tuple[GradedCochain, FlowTrace]:
    """Explicit Euler steps ``gamma <- gamma - tau (d[k] + delta[k]) gamma``."""
    params = params or FlowParams()
    if not gamma0.is_finite():
        raise ValueError("initial data is not finite")
    tau = resolve_step(k, grid, b, params)
    dom = TildeDomain(k)
    trace = FlowTrace(step=tau)
    norm0 = norm(grid, b, gamma0)
    bound = params.divergence_factor * norm0

    gamma = gamma0
    for j in range(params.max_steps + 1):
        grad = gradient_F(k, grid, b, gamma)
        gnorm = norm(grid, b, grad)
        res = np.zeros(grid.n + 1)
        for l, c in grad.components.items():
            res[l] = norm_k(grid, b, c)
        drift = dom.constraint_violation(grid, b, gamma)[1]
        trace.record(j * tau, inner(grid, b, masked_d(k, grid, b, gamma), gamma), gnorm, res, drift)
        if gnorm <= params.tol:
            trace.status = "converged"
            break
        if j == params.max_steps:
            trace.status = "max_steps"
            break
        gamma = gamma - tau * grad
        if params.project_each_step:
            gamma = project_tilde(dom, grid, b, gamma)
        if params.structure_projector is not None:
            gamma = params.structure_projector(gamma)
        gnorm_now = norm(grid, b, gamma)
        if params.renormalize and gnorm_now > 0 and norm0 > 0:
            gamma = gamma * (norm0 / gnorm_now)
            gnorm_now = norm0
        if not np.isfinite(gnorm_now) or gnorm_now > bound:
            trace.status = "diverged"
            log.warning("flow diverged at step %d: |gamma| = %.3e", j + 1, gnorm_now)
            raise FlowDivergence(f"flow diverged at step {j + 1} (|gamma| = {gnorm_now:.3e})", trace, gamma)
    return gamma, trace
