"""Truncated spectral Q-Wiener noise with a multiplicative coefficient.

The covariance basis is the Neumann cosine basis on the unit square,
g_{(k1,k2)}(x,y) = c_{k1} c_{k2} cos(k1 pi x) cos(k2 pi y) with c_0 = 1 and
c_k = sqrt(2), which is orthonormal in L2 and has explicit W^{2,inf} norms.
Per-mode amplitudes decay like (1 + |k|^2)^{-sigma}; the retained mode set
grows as the mesh is refined and is nested across refinements.

Increments are generated by a counter-based splitmix64 stream addressed by
(seed, path, step, mode), so any single value can be regenerated in any
order, on any worker, with the same result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import FemOperators
from .mesh import TriMesh

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _sm64(z: int) -> int:
    """splitmix64 output function."""
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return z ^ (z >> 31)


def _mix(*parts: int) -> int:
    """Fold integers into one 64-bit key, order-sensitive."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h = _sm64(((h + _GOLDEN) & _MASK64) ^ (p & _MASK64))
    return h


def derive_path_seed(seed: int, path: int) -> int:
    """Per-path substream seed (splitmix-style derivation of seed and id)."""
    return _mix(seed, path)


def _uniforms(key: int, count: int) -> np.ndarray:
    """count uniforms in [0, 1) from the stream starting at key."""
    out = np.empty(count)
    state = key
    for i in range(count):
        state = (state + _GOLDEN) & _MASK64
        out[i] = (_sm64(state) >> 11) * (1.0 / (1 << 53))
    return out


def standard_normal(key: int) -> float:
    """One N(0,1) draw for the given key (Box-Muller)."""
    u = _uniforms(key, 2)
    return float(np.sqrt(-2.0 * np.log(1.0 - u[0])) * np.cos(2.0 * np.pi * u[1]))


def rademacher(key: int) -> float:
    """One +-1 equiprobable draw for the given key."""
    return 1.0 if (_sm64((key + _GOLDEN) & _MASK64) & 1) else -1.0


def mode_cutoff(h: float, cap: int) -> int:
    """Largest retained wave number K(h) = floor(1/(2h)), capped."""
    return min(int(np.floor(1.0 / (2.0 * h))), cap)


@dataclass(frozen=True)
class NoiseModel:
    """Spectral representation of the discrete Q-Wiener increments.

    modes: (n_modes, 2) integer wave-number pairs in the retained set.
    lam: per-mode amplitudes noise_scale * (1 + |k|^2)^{-sigma_decay}.
    basis: (n_modes, N_O) evaluation of the basis functions at mesh nodes.
    rho_kind/rho0: multiplicative coefficient, constant rho0 or the
        bounded Lipschitz choice rho0 / (1 + z^2).
    rv_kind: distribution of the i.i.d. increments, gaussian or rademacher.
    """

    modes: np.ndarray
    lam: np.ndarray
    basis: np.ndarray
    trace_map: np.ndarray
    rho_kind: str = "constant"
    rho0: float = 1.0
    rv_kind: str = "gaussian"
    seed: int = 0
    sigma_decay: float = 2.0
    noise_scale: float = 0.1
    k_max: int = field(default=0)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    def rho(self, z):
        if self.rho_kind == "constant":
            return np.full_like(np.asarray(z, dtype=float), self.rho0)
        return self.rho0 / (1.0 + np.square(z))


def basis_eval(modes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the orthonormal cosine basis at the given points."""
    k1 = modes[:, 0][:, None]
    k2 = modes[:, 1][:, None]
    x = points[:, 0][None, :]
    y = points[:, 1][None, :]
    c1 = np.where(k1 == 0, 1.0, np.sqrt(2.0))
    c2 = np.where(k2 == 0, 1.0, np.sqrt(2.0))
    return c1 * c2 * np.cos(k1 * np.pi * x) * np.cos(k2 * np.pi * y)


def build_noise_model(
    mesh: TriMesh,
    noise_scale: float = 0.1,
    sigma_decay: float = 2.0,
    k_max_cap: int = 8,
    rho_kind: str = "constant",
    rho0: float = 1.0,
    rv_kind: str = "gaussian",
    seed: int = 0,
) -> NoiseModel:
    """Construct the truncated noise model for a given mesh.

    The retained set is {0, ..., K(h)}^2 with K(h) = floor(1/(2h)), so the
    sets are nested under mesh refinement.
    """
    if rho_kind not in ("constant", "rational"):
        raise ValueError(f"unknown rho_kind {rho_kind!r}")
    if rv_kind not in ("gaussian", "rademacher"):
        raise ValueError(f"unknown rv_kind {rv_kind!r}")
    if sigma_decay < 2.0:
        raise ValueError(f"sigma_decay must be >= 2 to keep the noise colored, got {sigma_decay}")

    kmax = mode_cutoff(mesh.h, k_max_cap)
    ks = np.arange(kmax + 1)
    k1, k2 = np.meshgrid(ks, ks, indexing="ij")
    modes = np.column_stack([k1.ravel(), k2.ravel()])
    lam = noise_scale * (1.0 + modes[:, 0] ** 2 + modes[:, 1] ** 2) ** (-sigma_decay)
    basis = basis_eval(modes, mesh.vertices)
    return NoiseModel(
        modes=modes,
        lam=lam,
        basis=basis,
        trace_map=mesh.trace_map,
        rho_kind=rho_kind,
        rho0=rho0,
        rv_kind=rv_kind,
        seed=seed,
        sigma_decay=sigma_decay,
        noise_scale=noise_scale,
        k_max=kmax,
    )


def sample_increment(model: NoiseModel, path: int, step: int, tau: float) -> np.ndarray:
    """Scaled per-mode increments sqrt(tau) * xi_k for one time step.

    The value for a given (seed, path, step, mode) is independent of
    evaluation order and of which other values have been drawn.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    base = derive_path_seed(model.seed, path)
    out = np.empty(model.n_modes)
    for i, (k1, k2) in enumerate(model.modes):
        key = _mix(base, step, int(k1), int(k2))
        if model.rv_kind == "gaussian":
            out[i] = standard_normal(key)
        else:
            out[i] = rademacher(key)
    return np.sqrt(tau) * out


def noise_field(
    model: NoiseModel, phi_prev: np.ndarray, increments: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Nodal noise field w and its boundary trace w_Gamma.

    w_i = rho(phi_prev_i) * sum_k lam_k (sqrt(tau) xi_k) g_k(x_i), i.e. the
    nodal interpolation of the multiplicative spectral increment; the
    boundary values are exactly the values at the mapped bulk nodes.
    """
    spectral = (model.lam * increments) @ model.basis
    w = model.rho(phi_prev) * spectral
    return w, w[model.trace_map]


def coloring_sum(model: NoiseModel) -> float:
    """Diagnostic bound sum_k lam_k^2 (1 + |g_k|_inf^2 (1 + pi^2 |k|^2)^2).

    Finite for sigma_decay >= 2; decreasing in sigma_decay.  Serves as a
    proxy for the W^{2,inf} coloring condition on the spectrum.
    """
    k1 = model.modes[:, 0].astype(float)
    k2 = model.modes[:, 1].astype(float)
    c1 = np.where(k1 == 0, 1.0, 2.0)
    c2 = np.where(k2 == 0, 1.0, 2.0)
    sup_sq = c1 * c2
    deriv = (1.0 + (np.pi * k1) ** 2 + (np.pi * k2) ** 2) ** 2
    return float(np.sum(model.lam**2 * (1.0 + sup_sq * deriv)))
