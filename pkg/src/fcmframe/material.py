"""Isotropic linear-elastic material (MPa)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Material:
    """Isotropic material. ``G`` is derived from ``E`` and ``nu``."""

    E: float
    nu: float
    G: float = field(init=False)

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {self.nu}")
        object.__setattr__(self, "E", float(self.E))
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "G", self.E / (2.0 * (1.0 + self.nu)))

    @property
    def lame(self):
        """(lambda, mu)."""
        lam = self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
        return lam, self.G

    def elasticity_matrix(self):
        """6x6 Voigt matrix for (xx, yy, zz, yz, xz, xy) with engineering shear."""
        lam, mu = self.lame
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] += 2 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        return C

    def scaled(self, factor):
        return Material(self.E * factor, self.nu)
