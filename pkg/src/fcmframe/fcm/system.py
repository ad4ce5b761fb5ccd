"""Assembled FCM model: unconstrained stiffness, penalty regions, factorization."""

from __future__ import annotations

import time
import warnings

import numpy as np

from .assembly import assemble_unconstrained
from .boundary import penalty_matrix, penalty_vector, surface_quadrature
from .grid import build_grid
from .quadrature import QuadratureScheme
from .solver import Factorization, FactorizationError, NotPositiveDefiniteError

__all__ = ["FcmSystem", "build_system", "PenaltyReducedWarning"]


class PenaltyReducedWarning(UserWarning):
    """The penalty parameter was lowered to obtain a positive definite factorization."""


class FcmSystem:
    """Unconstrained stiffness plus named penalty (Dirichlet) regions.

    The penalty matrix covers the union of all registered regions and is built
    once; a single factorization of ``K + P`` then serves every right-hand side
    that prescribes values on those regions.

    If ``K + P`` is not numerically positive definite, ``factorize`` lowers
    ``beta`` by ``beta_step`` and retries while the penalty diagonal stays at
    least ``min_penalty_ratio`` times the stiffness diagonal. ``beta`` then
    holds the value actually used and ``requested_beta`` the original one.
    Penalty loads must be built after ``factorize``; ``penalty_load`` does so.
    """

    def __init__(self, grid, domain, K, beta=1e14, quadrature=None, beta_step=1e4,
                 min_penalty_ratio=1e4):
        self.grid = grid
        self.domain = domain
        self.K = K
        self.beta = float(beta)
        self.requested_beta = float(beta)
        self.beta_step = float(beta_step)
        self.min_penalty_ratio = float(min_penalty_ratio)
        self.quadrature = quadrature or QuadratureScheme()
        self.regions = {}
        self._P = None
        self._factor = None
        self.timings = {}

    @property
    def n_dofs(self):
        return self.grid.n_dofs

    def add_region(self, name, triangles, physical_only=True):
        """Register a Dirichlet patch; returns its surface quadrature."""
        quad = surface_quadrature(self.grid, triangles, self.domain, physical_only)
        self.regions[name] = quad
        self._P = None
        self._factor = None
        return quad

    @property
    def penalty(self):
        if self._P is None:
            if not self.regions:
                raise ValueError("no Dirichlet regions registered")
            P = None
            for quad in self.regions.values():
                Pi = penalty_matrix(quad, self.beta)
                P = Pi if P is None else P + Pi
            self._P = P.tocsr()
        return self._P

    def penalty_load(self, name, prescribed):
        self.factorize()
        return penalty_vector(self.regions[name], prescribed, self.beta)

    def factorize(self, **kwargs):
        if self._factor is not None:
            return self._factor
        t0 = time.perf_counter()
        k_diag = float(self.K.diagonal().max())
        while True:
            try:
                self._factor = Factorization(self.K + self.penalty, **kwargs)
                break
            except NotPositiveDefiniteError as exc:
                lower = self.beta / self.beta_step
                p_diag = float(self.penalty.diagonal().max()) / self.beta_step
                if p_diag < self.min_penalty_ratio * k_diag:
                    raise FactorizationError(
                        f"{exc}; beta cannot be lowered below {self.beta:.1e} without "
                        "losing constraint accuracy") from None
                warnings.warn(f"penalty beta lowered from {self.beta:.1e} to {lower:.1e}: "
                              f"{exc}", PenaltyReducedWarning, stacklevel=2)
                self.beta = lower
                self._P = None
        self.timings["factorize_s"] = time.perf_counter() - t0
        return self._factor

    def solve(self, rhs):
        return self.factorize().solve(rhs)

    def release(self):
        """Drop the cached factorization; the next solve refactorizes."""
        if self._factor is not None:
            self._factor.free()
        self._factor = None


def build_system(domain, resolution, p=3, depth=4, beta=1e14, margin=0.0, samples=3,
                 box=None):
    """Build grid and assemble the unconstrained stiffness for a domain."""
    t0 = time.perf_counter()
    grid = build_grid(domain, resolution, p=p, margin=margin, box=box, samples=samples)
    quad = QuadratureScheme(depth=depth, samples=samples)
    t1 = time.perf_counter()
    K = assemble_unconstrained(grid, domain, quad)
    system = FcmSystem(grid, domain, K, beta, quad)
    system.timings.update(grid_s=t1 - t0, assemble_s=time.perf_counter() - t1)
    return system
