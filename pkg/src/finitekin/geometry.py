"""Vessel geometry, configuration types, and hard-sphere admissibility indicators.

All indicators use the strong convention: an indicator is zero exactly at its
threshold, so a pair at contact distance or a center at exactly half a
diameter from a wall is already excluded.  `ensemble_theta` is the product of
all pair (and, for variant B, triple) factors together with the wall factors;
it equals one exactly on the collision-free subset of configuration space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._compat import USE_NUMBA, njit

Vec3 = np.ndarray  # shape (3,), float64


def vec3(x, y=None, z=None) -> np.ndarray:
    """Coerce to a float64 length-3 vector."""
    if y is None:
        a = np.asarray(x, dtype=np.float64).reshape(3)
    else:
        a = np.array([x, y, z], dtype=np.float64)
    return a


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box vessel with hard walls and a common sphere diameter.

    `periodic` switches wall events off (wrap-around); it exists only for
    homogeneous-gas debugging and is not part of the physical model.
    """

    lo: np.ndarray
    hi: np.ndarray
    sigma: float
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lo", vec3(self.lo))
        object.__setattr__(self, "hi", vec3(self.hi))
        object.__setattr__(self, "sigma", float(self.sigma))
        if not np.all(self.hi > self.lo):
            raise ValueError("domain needs hi > lo componentwise")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if not self.periodic and np.any(self.edge_lengths() <= self.sigma):
            raise ValueError("box too small: each edge must exceed sigma")

    def edge_lengths(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return float(np.prod(self.edge_lengths()))

    def accessible_volume(self) -> float:
        """Volume available to sphere centers (clearance sigma/2 per wall)."""
        if self.periodic:
            return self.volume()
        return float(np.prod(self.edge_lengths() - self.sigma))

    def accessible_lo(self) -> np.ndarray:
        return self.lo + 0.5 * self.sigma

    def accessible_hi(self) -> np.ndarray:
        return self.hi - 0.5 * self.sigma

    def wall_distance(self, r: np.ndarray) -> np.ndarray:
        """Signed distance from point(s) to the nearest wall (negative outside)."""
        r = np.asarray(r, dtype=np.float64)
        d = np.minimum(r - self.lo, self.hi - r)
        return d.min(axis=-1)


@dataclass
class NBodyConfiguration:
    """Positions of N sphere centers."""

    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must have shape (N, 3)")

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass
class NBodyState:
    """Positions, velocities, and time of an N-body microstate."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.velocities = np.ascontiguousarray(self.velocities, dtype=np.float64)
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 2:
            raise ValueError("positions and velocities must both be (N, 3)")
        self.time = float(self.time)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "NBodyState":
        return NBodyState(self.positions.copy(), self.velocities.copy(), self.time)


def min_pair_separation(positions: np.ndarray) -> float:
    """Smallest center-to-center distance; inf for fewer than two particles."""
    n = positions.shape[0]
    if n < 2:
        return np.inf
    diff = positions[:, None, :] - positions[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    iu = np.triu_indices(n, k=1)
    return float(np.sqrt(d2[iu].min()))


def min_wall_clearance(positions: np.ndarray, domain: DomainSpec) -> float:
    """Smallest signed center-to-wall distance over all particles and faces."""
    if domain.periodic:
        return np.inf
    lo = (positions - domain.lo).min()
    hi = (domain.hi - positions).min()
    return float(min(lo, hi))


def strong_heaviside(y):
    """1 for y > 0, else 0 (zero at the threshold)."""
    y = np.asarray(y, dtype=np.float64)
    out = (y > 0.0).astype(np.float64)
    if out.ndim == 0:
        return float(out)
    return out


def boundary_theta(domain: DomainSpec, r) -> float | np.ndarray:
    """Wall admissibility of center position(s): clearance must exceed sigma/2."""
    if domain.periodic:
        r = np.asarray(r, dtype=np.float64)
        return strong_heaviside(np.ones(r.shape[:-1]) if r.ndim > 1 else 1.0)
    return strong_heaviside(domain.wall_distance(r) - 0.5 * domain.sigma)


def _pair_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def binary_theta_A(config: NBodyConfiguration, sigma: float, i: int) -> float:
    """Pair admissibility factor of particle i against all higher-index particles."""
    r = config.positions
    n = r.shape[0]
    if i >= n - 1:
        return 1.0
    d = np.linalg.norm(r[i + 1 :] - r[i], axis=1)
    return float(np.all(d > sigma))


def binary_theta_B(config: NBodyConfiguration, sigma: float, i: int) -> float:
    """Variant-A factor of particle i times its multiple-contact exclusions.

    For each pair (m, n) with i < m < n the factors
    th(d_im + d_in - 2 sigma) * th(d_mn + d_im - 2 sigma)
    additionally exclude near-simultaneous double contacts.  On the
    collision-free subset they are all one, so A and B agree there.
    """
    base = binary_theta_A(config, sigma, i)
    if base == 0.0:
        return 0.0
    r = config.positions
    n = r.shape[0]
    for m in range(i + 1, n):
        d_im = np.linalg.norm(r[m] - r[i])
        for k in range(m + 1, n):
            d_ik = np.linalg.norm(r[k] - r[i])
            d_mk = np.linalg.norm(r[k] - r[m])
            if d_im + d_ik <= 2.0 * sigma or d_mk + d_im <= 2.0 * sigma:
                return 0.0
    return 1.0


def ensemble_theta(config: NBodyConfiguration, domain: DomainSpec, variant: str = "A") -> float:
    """Full admissibility of a configuration: pair/triple factors times wall factors."""
    if variant not in ("A", "B"):
        raise ValueError("variant must be 'A' or 'B'")
    r = config.positions
    walls = boundary_theta(domain, r)
    if not np.all(walls > 0.0):
        return 0.0
    fn = binary_theta_A if variant == "A" else binary_theta_B
    for i in range(config.n):
        if fn(config, domain.sigma, i) == 0.0:
            return 0.0
    return 1.0


# Batch evaluation over many configurations: the hot path for the
# randomized equivalence checks and for rejection sampling of initial states.


@njit(cache=True)
def _ensemble_theta_batch_numba(pos, lo, hi, sigma, variant_b, periodic):  # pragma: no cover - jitted
    m, n = pos.shape[0], pos.shape[1]
    half = 0.5 * sigma
    out = np.ones(m, dtype=np.float64)
    for c in range(m):
        ok = True
        if not periodic:
            for i in range(n):
                for ax in range(3):
                    x = pos[c, i, ax]
                    if x - lo[ax] <= half or hi[ax] - x <= half:
                        ok = False
                        break
                if not ok:
                    break
        if ok:
            for i in range(n - 1):
                for j in range(i + 1, n):
                    dx = pos[c, i, 0] - pos[c, j, 0]
                    dy = pos[c, i, 1] - pos[c, j, 1]
                    dz = pos[c, i, 2] - pos[c, j, 2]
                    if np.sqrt(dx * dx + dy * dy + dz * dz) <= sigma:
                        ok = False
                        break
                if not ok:
                    break
        if ok and variant_b:
            two_sigma = 2.0 * sigma
            for i in range(n - 2):
                for m2 in range(i + 1, n - 1):
                    dx = pos[c, i, 0] - pos[c, m2, 0]
                    dy = pos[c, i, 1] - pos[c, m2, 1]
                    dz = pos[c, i, 2] - pos[c, m2, 2]
                    d_im = np.sqrt(dx * dx + dy * dy + dz * dz)
                    for k in range(m2 + 1, n):
                        dx2 = pos[c, i, 0] - pos[c, k, 0]
                        dy2 = pos[c, i, 1] - pos[c, k, 1]
                        dz2 = pos[c, i, 2] - pos[c, k, 2]
                        d_ik = np.sqrt(dx2 * dx2 + dy2 * dy2 + dz2 * dz2)
                        dx3 = pos[c, m2, 0] - pos[c, k, 0]
                        dy3 = pos[c, m2, 1] - pos[c, k, 1]
                        dz3 = pos[c, m2, 2] - pos[c, k, 2]
                        d_mk = np.sqrt(dx3 * dx3 + dy3 * dy3 + dz3 * dz3)
                        if d_im + d_ik <= two_sigma or d_mk + d_im <= two_sigma:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    break
        if not ok:
            out[c] = 0.0
    return out


def _ensemble_theta_batch_numpy(pos, lo, hi, sigma, variant_b, periodic):
    m, n = pos.shape[0], pos.shape[1]
    ok = np.ones(m, dtype=bool)
    if not periodic:
        clear = np.minimum(pos - lo, hi - pos).min(axis=(1, 2))
        ok &= clear > 0.5 * sigma
    diff = pos[:, :, None, :] - pos[:, None, :, :]
    dist = np.sqrt(np.einsum("cijk,cijk->cij", diff, diff))
    iu = np.triu_indices(n, k=1)
    if n >= 2:
        ok &= np.all(dist[:, iu[0], iu[1]] > sigma, axis=1)
    if variant_b and n >= 3:
        two_sigma = 2.0 * sigma
        for i in range(n - 2):
            for m2 in range(i + 1, n - 1):
                for k in range(m2 + 1, n):
                    good = (dist[:, i, m2] + dist[:, i, k] > two_sigma) & (
                        dist[:, m2, k] + dist[:, i, m2] > two_sigma
                    )
                    ok &= good
    return ok.astype(np.float64)


def ensemble_theta_batch(positions: np.ndarray, domain: DomainSpec, variant: str = "A") -> np.ndarray:
    """Vectorized ensemble_theta over a (M, N, 3) stack of configurations."""
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    if pos.ndim != 3 or pos.shape[2] != 3:
        raise ValueError("positions must have shape (M, N, 3)")
    variant_b = {"A": False, "B": True}[variant]
    if USE_NUMBA:
        return _ensemble_theta_batch_numba(
            pos, domain.lo, domain.hi, domain.sigma, variant_b, domain.periodic
        )
    return _ensemble_theta_batch_numpy(pos, domain.lo, domain.hi, domain.sigma, variant_b, domain.periodic)
