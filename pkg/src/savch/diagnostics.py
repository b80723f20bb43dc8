"""Per-step and per-path certifiable quantities.

The central object is the exact discrete energy identity satisfied by every
accepted step: with  E_mod = phi'K phi/2 + (T phi)'K_s (T phi)/2 + r^2 + s^2,
the change of E_mod plus all squared increments and the dissipation terms
equals a sum of eight noise pairings S_1..S_8.  Both sides are evaluated
here from scratch (no reuse of the solver's intermediate quantities), so
the reported residual certifies the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .fem import FemOperators, norm_h1_bulk, norm_h1_surf
from .potentials import Potentials
from .stepper import CouplingVectors, SavState


class DiagnosticFailure(RuntimeError):
    """Raised when a step produced non-finite diagnostic quantities."""


@dataclass(frozen=True)
class StepReport:
    """Diagnostics of one accepted step.  Field order fixes the CSV columns."""

    step: int
    t: float
    mass: float
    E_mod: float
    E_O: float
    E_G: float
    r: float
    s: float
    drift_r: float
    drift_s: float
    grad_mu_sq: float
    theta_sq: float
    xi_O_norm: float
    xi_G_norm: float
    identity_residual: float
    mass_residual: float
    boundary_residual: float


CSV_COLUMNS = tuple(f.name for f in fields(StepReport))


def modified_energy(ops: FemOperators, state: SavState) -> float:
    """E_mod = Dirichlet energies plus squared auxiliary variables."""
    phi_g = ops.trace(state.phi)
    return float(
        0.5 * state.phi @ (ops.K_bulk @ state.phi)
        + 0.5 * phi_g @ (ops.K_surf @ phi_g)
        + state.r**2
        + state.s**2
    )


def initial_report(ops: FemOperators, pot: Potentials, state: SavState) -> StepReport:
    """Step-0 row: energies of the initial state, all residuals zero."""
    return StepReport(
        step=0,
        t=state.t,
        mass=float(ops.m @ state.phi),
        E_mod=modified_energy(ops, state),
        E_O=pot.energy_bulk(ops, state.phi),
        E_G=pot.energy_surf(ops, state.phi),
        r=state.r,
        s=state.s,
        drift_r=abs(state.r - math.sqrt(pot.energy_bulk(ops, state.phi))),
        drift_s=abs(state.s - math.sqrt(pot.energy_surf(ops, state.phi))),
        grad_mu_sq=0.0,
        theta_sq=0.0,
        xi_O_norm=0.0,
        xi_G_norm=0.0,
        identity_residual=0.0,
        mass_residual=0.0,
        boundary_residual=0.0,
    )


def report(
    ops: FemOperators,
    pot: Potentials,
    prev: SavState,
    new: SavState,
    coupling: CouplingVectors,
    xi_O: np.ndarray,
    xi_G: np.ndarray,
    tau: float,
    step: int,
) -> StepReport:
    """Evaluate all step diagnostics, including the energy identity residual."""
    dphi = new.phi - prev.phi
    dphi_g = ops.trace(dphi)
    phi_g_new = ops.trace(new.phi)
    dr = new.r - prev.r
    ds = new.s - prev.s

    grad_mu_sq = float(new.mu @ (ops.K_bulk @ new.mu))
    theta_sq = float(new.theta @ (ops.b * new.theta))

    e_mod_new = modified_energy(ops, new)
    e_mod_prev = modified_energy(ops, prev)
    lhs = (
        e_mod_new
        - e_mod_prev
        + 0.5 * float(dphi @ (ops.K_bulk @ dphi))
        + 0.5 * float(dphi_g @ (ops.K_surf @ dphi_g))
        + dr**2
        + ds**2
        + tau * grad_mu_sq
        + tau * theta_sq
    )

    w, w_g = coupling.w, coupling.w_gamma
    sqrt_EO = math.sqrt(coupling.E_O)
    sqrt_EG = math.sqrt(coupling.E_G)
    s1 = float(new.phi @ (ops.K_bulk @ w))
    s2 = float(phi_g_new @ (ops.K_surf @ w_g))
    s3 = new.r * coupling.sigma_F / sqrt_EO
    s4 = -new.r * coupling.sigma_F**2 / (4.0 * coupling.E_O**1.5)
    s5 = new.r / (2.0 * sqrt_EO) * float(ops.m @ (coupling.fsecond * w**2))
    s6 = new.s * coupling.sigma_G / sqrt_EG
    s7 = -new.s * coupling.sigma_G**2 / (4.0 * coupling.E_G**1.5)
    s8 = new.s / (2.0 * sqrt_EG) * float(ops.b @ (coupling.gsecond * w_g**2))
    rhs = s1 + s2 + s3 + s4 + s5 + s6 + s7 + s8
    if not coupling.augmented:
        # classical SAV: the tested potential rows only carry S1, S2, S3, S6
        rhs = s1 + s2 + s3 + s6

    mass_new = float(ops.m @ new.phi)
    mass_prev = float(ops.m @ prev.phi)
    mass_residual = abs(mass_new - mass_prev - float(ops.m @ w)) / (1.0 + abs(mass_new))
    bmass_new = float(ops.b @ phi_g_new)
    boundary_residual = abs(
        float(ops.b @ dphi_g) + tau * float(ops.b @ new.theta) - float(ops.b @ w_g)
    ) / (1.0 + abs(bmass_new))

    rep = StepReport(
        step=step,
        t=new.t,
        mass=mass_new,
        E_mod=e_mod_new,
        E_O=pot.energy_bulk(ops, new.phi),
        E_G=pot.energy_surf(ops, new.phi),
        r=new.r,
        s=new.s,
        drift_r=abs(new.r - math.sqrt(pot.energy_bulk(ops, new.phi))),
        drift_s=abs(new.s - math.sqrt(pot.energy_surf(ops, new.phi))),
        grad_mu_sq=grad_mu_sq,
        theta_sq=theta_sq,
        xi_O_norm=math.sqrt(max(float(xi_O @ (ops.m * xi_O)), 0.0)),
        xi_G_norm=math.sqrt(max(float(xi_G @ (ops.b * xi_G)), 0.0)),
        identity_residual=abs(lhs - rhs),
        mass_residual=mass_residual,
        boundary_residual=boundary_residual,
    )
    values = [getattr(rep, name) for name in CSV_COLUMNS]
    if not all(np.isfinite(values)):
        raise DiagnosticFailure(f"non-finite diagnostics at step {step}: {rep}")
    return rep


@dataclass(frozen=True)
class PathSummary:
    """Per-path statistics feeding the Monte Carlo estimators."""

    max_drift_r: float
    max_drift_s: float
    sum_tau_xi_O_sq: float
    sum_tau_xi_G_sq: float
    max_h1_bulk: float
    max_h1_surf: float
    sum_tau_grad_mu_sq: float
    sum_tau_theta_sq: float
    sum_dr_sq: float
    sum_ds_sq: float
    sum_dphi_h1_sq: float
    mass_change: float
    nikolskii: dict[int, float]

    def as_rows(self) -> list[tuple[str, float]]:
        """Flat (statistic, value) pairs in a fixed order."""
        rows = [
            ("max_drift_r", self.max_drift_r),
            ("max_drift_s", self.max_drift_s),
            ("sum_tau_xi_O_sq", self.sum_tau_xi_O_sq),
            ("sum_tau_xi_G_sq", self.sum_tau_xi_G_sq),
            ("max_h1_bulk", self.max_h1_bulk),
            ("max_h1_surf", self.max_h1_surf),
            ("sum_tau_grad_mu_sq", self.sum_tau_grad_mu_sq),
            ("sum_tau_theta_sq", self.sum_tau_theta_sq),
            ("sum_dr_sq", self.sum_dr_sq),
            ("sum_ds_sq", self.sum_ds_sq),
            ("sum_dphi_h1_sq", self.sum_dphi_h1_sq),
            ("mass_change", self.mass_change),
        ]
        rows.extend((f"nikolskii_l{lag}", v) for lag, v in sorted(self.nikolskii.items()))
        return rows


def nikolskii_lags(n_steps: int) -> list[int]:
    """Dyadic lag set 1, 2, 4, ... up to the path length."""
    lags = []
    lag = 1
    while lag <= n_steps:
        lags.append(lag)
        lag *= 2
    return lags


def path_statistics(
    ops: FemOperators,
    reports: list[StepReport],
    trajectory: list[SavState],
    tau: float,
) -> PathSummary:
    """Aggregate one complete path (reports for steps 0..N, N+1 states)."""
    n_steps = len(trajectory) - 1
    if len(reports) != n_steps + 1:
        raise ValueError(f"expected {n_steps + 1} reports, got {len(reports)}")

    nikolskii = {}
    for lag in nikolskii_lags(n_steps):
        acc = 0.0
        for m in range(n_steps - lag + 1):
            diff = trajectory[m + lag].phi - trajectory[m].phi
            acc += tau * float(diff @ (ops.m * diff))
        nikolskii[lag] = acc

    h1_bulk = [norm_h1_bulk(ops, st.phi) for st in trajectory]
    h1_surf = [norm_h1_surf(ops, ops.trace(st.phi)) for st in trajectory]
    dphi_h1_sq = 0.0
    for prev, new in zip(trajectory[:-1], trajectory[1:]):
        d = new.phi - prev.phi
        dphi_h1_sq += norm_h1_bulk(ops, d) ** 2

    return PathSummary(
        max_drift_r=max(rep.drift_r for rep in reports),
        max_drift_s=max(rep.drift_s for rep in reports),
        sum_tau_xi_O_sq=sum(tau * rep.xi_O_norm**2 for rep in reports),
        sum_tau_xi_G_sq=sum(tau * rep.xi_G_norm**2 for rep in reports),
        max_h1_bulk=max(h1_bulk),
        max_h1_surf=max(h1_surf),
        sum_tau_grad_mu_sq=sum(tau * rep.grad_mu_sq for rep in reports),
        sum_tau_theta_sq=sum(tau * rep.theta_sq for rep in reports),
        sum_dr_sq=sum(
            (b.r - a.r) ** 2 for a, b in zip(trajectory[:-1], trajectory[1:])
        ),
        sum_ds_sq=sum(
            (b.s - a.s) ** 2 for a, b in zip(trajectory[:-1], trajectory[1:])
        ),
        sum_dphi_h1_sq=dphi_h1_sq,
        mass_change=reports[-1].mass - reports[0].mass,
        nikolskii=nikolskii,
    )
