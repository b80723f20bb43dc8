"""Built-in identity battery behind the `savch selftest` subcommand.

Each check prints one ok/FAIL line; the battery returns the number of
failures so the CLI can exit nonzero.  The checks mirror the cheap exact
identities of the scheme (counting, quadrature exactness, balances, the
per-step energy identity and solver uniqueness).
"""

from __future__ import annotations

import numpy as np

from . import noise as noise_mod
from .config import RunConfig
from .fem import assemble, discrete_laplacian, norm_bulk
from .harness import build_problem, simulate_path
from .mesh import build_unit_square, extract_boundary
from .potentials import Potentials
from .stepper import Stepper, initial_state


def _check(name: str, ok: bool, detail: str = "") -> int:
    if ok:
        print(f"ok   {name}")
        return 0
    print(f"FAIL {name}" + (f": {detail}" if detail else ""))
    return 1


def run_selftest() -> int:
    """Run all checks; returns the number of failures."""
    failures = 0

    mesh = build_unit_square(2)
    failures += _check(
        "mesh counts (n=2)",
        mesh.num_vertices == 9
        and mesh.triangles.shape[0] == 8
        and mesh.boundary_edges.shape[0] == 8
        and mesh.num_boundary_nodes == 8,
    )
    mesh4 = build_unit_square(4)
    failures += _check(
        "mesh areas sum to 1 (n=4)",
        abs(float(np.sum(mesh4.triangle_areas())) - 1.0) < 1e-14,
    )
    edges, _ = extract_boundary(mesh4)
    failures += _check(
        "boundary length 4 (n=4)",
        abs(float(np.sum(mesh4.boundary_edge_lengths())) - 4.0) < 1e-14,
    )

    ops = assemble(mesh)
    failures += _check("lumped mass sums to |O|", abs(float(np.sum(ops.m)) - 1.0) < 1e-14)
    failures += _check(
        "stiffness annihilates constants",
        float(np.max(np.abs(ops.K_bulk @ np.ones(ops.n_bulk)))) < 1e-13,
    )
    phi_x = mesh.vertices[:, 0].copy()
    failures += _check(
        "Dirichlet energy of x equals 1",
        abs(float(phi_x @ (ops.K_bulk @ phi_x)) - 1.0) < 1e-13,
    )
    rng = np.random.default_rng(7)
    v = rng.standard_normal(ops.n_bulk)
    lap = discrete_laplacian(ops, v)
    failures += _check("discrete Laplacian is mass-orthogonal to 1", abs(float(ops.m @ lap)) < 1e-12)

    pot = Potentials(gamma=1.0, gamma_fs_1=1.0, gamma_fs_2=2.0)
    failures += _check("F(0) = 1.25", abs(pot.F(0.0) - 1.25) < 1e-15)
    failures += _check("dF(+-1) = 0", pot.dF(1.0) == 0.0 and pot.dF(-1.0) == 0.0)
    failures += _check(
        "wetting density endpoints",
        abs(pot.gamma_fs(-1.0) - 1.0) < 1e-15 and abs(pot.gamma_fs(1.0) - 2.0) < 1e-15,
    )
    failures += _check("dG(1) = 0", abs(pot.dG(1.0)) < 1e-15)
    zs = np.linspace(-3, 3, 601)
    failures += _check("G bounded below by gamma", bool(np.all(pot.G(zs) >= pot.gamma - 1e-12)))

    model = noise_mod.build_noise_model(mesh, noise_scale=0.5, k_max_cap=2, seed=42)
    u1 = noise_mod.sample_increment(model, path=3, step=5, tau=0.01)
    u2 = noise_mod.sample_increment(model, path=3, step=5, tau=0.01)
    failures += _check("noise stream deterministic", bool(np.array_equal(u1, u2)))
    rad = noise_mod.build_noise_model(mesh, rv_kind="rademacher", k_max_cap=2, seed=1)
    xi = noise_mod.sample_increment(rad, path=0, step=1, tau=1.0)
    failures += _check("rademacher support {-1,+1}", bool(np.all(np.abs(xi) == 1.0)))
    w, w_g = noise_mod.noise_field(model, np.zeros(ops.n_bulk), u1)
    failures += _check(
        "noise trace matches bulk nodes",
        bool(np.array_equal(w_g, w[mesh.trace_map])),
    )

    cfg = RunConfig(nx=8, T_final=0.1, n_steps=20, noise_scale=0.0, phi0_kind="constant", phi0_value=1.0)
    prob = build_problem(cfg)
    trajectory, reports = simulate_path(cfg, prob, path_id=0)
    failures += _check(
        "constant-1 fixed point preserved",
        float(np.max(np.abs(trajectory[-1].phi - 1.0))) < 1e-12,
    )
    cfg = RunConfig(nx=8, T_final=0.1, n_steps=20, noise_scale=0.1, seed=2024)
    prob = build_problem(cfg)
    trajectory, reports = simulate_path(cfg, prob, path_id=0)
    failures += _check(
        "mass balance each step",
        max(rep.mass_residual for rep in reports) < 1e-12,
    )
    failures += _check(
        "boundary balance each step",
        max(rep.boundary_residual for rep in reports) < 1e-12,
    )
    failures += _check(
        "per-step energy identity",
        all(rep.identity_residual <= 1e-9 * (1.0 + abs(rep.E_mod)) for rep in reports),
    )

    # permuted re-solve of one noisy step
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    stepper = Stepper(prob.ops, prob.pot, cfg.tau)
    state = trajectory[5]
    u = noise_mod.sample_increment(prob.noise, 0, 6, cfg.tau)
    w, w_g = noise_mod.noise_field(prob.noise, state.phi, u)
    coupling = stepper.build_coupling(state, w, w_g)
    A, rhs = stepper.assemble_system(state, coupling)
    x = spla.spsolve(A.tocsc(), rhs)
    perm = np.random.default_rng(11).permutation(A.shape[0])
    P = sp.csr_matrix((np.ones(len(perm)), (np.arange(len(perm)), perm)), shape=A.shape)
    y = spla.spsolve((P @ A @ P.T).tocsc(), P @ rhs)
    failures += _check(
        "permuted re-solve agrees",
        float(np.max(np.abs((P.T @ y) - x))) < 1e-8,
    )

    zero_state = initial_state(prob.ops, prob.pot, "cosine")
    e_bulk = prob.pot.energy_bulk(prob.ops, zero_state.phi)
    failures += _check(
        "initial SAV values on the energy manifold",
        abs(zero_state.r**2 - e_bulk) <= 1e-14 * e_bulk
        and abs(norm_bulk(prob.ops, zero_state.mu)) == 0.0,
    )

    print(f"{'-' * 40}")
    if failures:
        print(f"selftest: {failures} check(s) FAILED")
    else:
        print("selftest: all checks passed")
    return failures
