"""Shifted double-well potential, wetting energy density, discrete energies.

The bulk potential is F(z) = (z^2-1)^2/4 + gamma with gamma > 0 so that
1/sqrt of the discrete energies is always well defined.  The boundary
potential G adds a C^1 quintic interpolation between the two wall energy
densities, clamped to constants outside [-1, 1], and is shifted so that
G >= gamma as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FemOperators


KINDS = ("shifted-polynomial-double-well",)


@dataclass(frozen=True)
class Potentials:
    """Parameters of the bulk and boundary potentials.

    gamma: positive shift bounding F and G from below.
    gamma_fs_1: wall energy density of the surrounding fluid (phi < -1).
    gamma_fs_2: wall energy density of the wetting fluid (phi > 1).
    kind: potential family; only the shifted polynomial double well is
        implemented (logarithmic and obstacle potentials fail the required
        smoothness).
    """

    gamma: float = 1.0
    gamma_fs_1: float = 1.0
    gamma_fs_2: float = 2.0
    kind: str = "shifted-polynomial-double-well"

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    # bulk double well

    def F(self, z):
        return 0.25 * (np.square(z) - 1.0) ** 2 + self.gamma

    def dF(self, z):
        return z * z * z - z

    def d2F(self, z):
        return 3.0 * np.square(z) - 1.0

    # wetting energy density, C^1 clamped quintic

    def gamma_fs(self, z):
        z = np.asarray(z, dtype=float)
        zc = np.clip(z, -1.0, 1.0)
        quintic = 0.375 * zc**5 - 1.25 * zc**3 + 1.875 * zc
        half_diff = 0.5 * (self.gamma_fs_2 - self.gamma_fs_1)
        half_sum = 0.5 * (self.gamma_fs_2 + self.gamma_fs_1)
        out = half_diff * quintic + half_sum
        return out if out.ndim else float(out)

    def d_gamma_fs(self, z):
        z = np.asarray(z, dtype=float)
        half_diff = 0.5 * (self.gamma_fs_2 - self.gamma_fs_1)
        inside = np.abs(z) <= 1.0
        out = np.where(inside, half_diff * (1.875 * z**4 - 3.75 * z**2 + 1.875), 0.0)
        return out if out.ndim else float(out)

    def d2_gamma_fs(self, z):
        z = np.asarray(z, dtype=float)
        half_diff = 0.5 * (self.gamma_fs_2 - self.gamma_fs_1)
        inside = np.abs(z) <= 1.0
        out = np.where(inside, half_diff * (7.5 * z**3 - 7.5 * z), 0.0)
        return out if out.ndim else float(out)

    # boundary potential

    def G(self, z):
        return self.F(z) + self.gamma_fs(z) - min(self.gamma_fs_1, self.gamma_fs_2)

    def dG(self, z):
        return self.dF(z) + self.d_gamma_fs(z)

    def d2G(self, z):
        return self.d2F(z) + self.d2_gamma_fs(z)

    # discrete energies (mass-lumped)

    def energy_bulk(self, ops: FemOperators, phi: np.ndarray) -> float:
        """E_h over the bulk: sum_i m_i F(phi_i), always >= gamma |O|."""
        return float(ops.m @ self.F(phi))

    def energy_surf(self, ops: FemOperators, phi: np.ndarray) -> float:
        """E_h over the boundary: sum_j b_j G(phi at trace node j).

        Accepts either a bulk vector (restricted via the trace map) or a
        boundary vector of length ops.n_surf; when the two lengths coincide
        (single-cell mesh) the argument is read as a bulk vector.
        """
        phi_gamma = ops.trace(phi) if phi.shape[0] == ops.n_bulk else phi
        return float(ops.b @ self.G(phi_gamma))
