"""Replica ensembles, factorized initial sampling, smooth 1-body PDF.

The 1-body PDF estimate is a Gaussian product-kernel density over the pooled
replica samples, normalized to integrate to N over the box: each kernel's
position part is renormalized by its in-box mass, so no probability leaks
through the walls. Gradients and Laplacians in position are analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._compat import USE_NUMBA, njit
from .dynamics import Trajectory, simulate
from .geometry import (
    DomainSpec,
    NBodyConfiguration,
    NBodyState,
    boundary_theta,
    ensemble_theta,
)
from .rng import stream

SQRT2 = math.sqrt(2.0)
LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# initial 1-body profiles


@dataclass
class InitialPdfSpec:
    """Factorized-per-particle initial 1-body profile over Omega x R^3.

    density(r) is the unnormalized spatial profile (strictly positive on the
    box); density_sup bounds it for rejection thinning. Velocities are
    Gaussian with position-dependent mean and per-axis variances, which
    covers drifted, anisotropic, and locally cooled profiles.
    """

    density: object  # (R,3) -> (R,)
    velocity_mean: object  # (R,3) -> (R,3)
    velocity_var: object  # (R,3) -> (R,3) per-axis variances
    density_sup: float
    label: str = "custom"
    normalization: float = field(default=0.0)  # ∫ density over the box; see normalize()

    def normalize(self, domain: DomainSpec, n_mc: int = 200000, seed: int = 0) -> float:
        rng = stream(seed, "pdfnorm")
        pts = rng.uniform(domain.lo, domain.hi, size=(n_mc, 3))
        self.normalization = float(domain.volume() * np.mean(self.density(pts)))
        return self.normalization


def uniform_spec(T0: float = 1.0, V0=(0.0, 0.0, 0.0)) -> InitialPdfSpec:
    V0 = np.asarray(V0, dtype=np.float64)

    def dens(r):
        return np.ones(r.shape[0])

    def vmean(r):
        return np.broadcast_to(V0, (r.shape[0], 3)).copy()

    def vvar(r):
        return np.full((r.shape[0], 3), T0)

    return InitialPdfSpec(dens, vmean, vvar, 1.0, label="uniform")


def ramp_spec(domain: DomainSpec, slope: float, axis: int = 0, T0: float = 1.0,
              V0=(0.0, 0.0, 0.0)) -> InitialPdfSpec:
    """Linear ramp 1 + slope * (x - center)/edge along one axis; |slope| < 2."""
    if abs(slope) >= 2.0:
        raise ValueError("|slope| must be < 2 to keep the ramp positive")
    V0 = np.asarray(V0, dtype=np.float64)
    c = 0.5 * (domain.lo[axis] + domain.hi[axis])
    edge = domain.edge_lengths()[axis]

    def dens(r):
        return 1.0 + slope * (r[:, axis] - c) / edge

    def vmean(r):
        return np.broadcast_to(V0, (r.shape[0], 3)).copy()

    def vvar(r):
        return np.full((r.shape[0], 3), T0)

    return InitialPdfSpec(dens, vmean, vvar, 1.0 + 0.5 * abs(slope), label="ramp")


def exponential_spec(domain: DomainSpec, a, T0: float = 1.0, V0=(0.0, 0.0, 0.0)) -> InitialPdfSpec:
    """Density ∝ exp(a·r)."""
    a = np.asarray(a, dtype=np.float64)
    corners = np.array([[domain.lo[k] if ((s >> k) & 1) == 0 else domain.hi[k] for k in range(3)]
                        for s in range(8)])
    sup = float(np.exp(np.max(corners @ a)))
    V0 = np.asarray(V0, dtype=np.float64)

    def dens(r):
        return np.exp(r @ a)

    def vmean(r):
        return np.broadcast_to(V0, (r.shape[0], 3)).copy()

    def vvar(r):
        return np.full((r.shape[0], 3), T0)

    return InitialPdfSpec(dens, vmean, vvar, sup, label="exponential")


def pressure_contrast_spec(domain: DomainSpec, eps_n: float = 0.6, eps_T: float = 0.45,
                           eps_aniso: float = 0.35, T0: float = 1.0, axis: int = 0,
                           width_frac: float = 0.22) -> InitialPdfSpec:
    """Density bump with an anti-correlated directional temperature dip.

    A wall-flattened Gaussian bump phi(r) raises the density and lowers the
    variance along `axis` where the gas is dense, with a global anisotropy
    between that axis and the others. The local pressure contrast makes the
    initial state strongly non-equilibrium while keeping the profile smooth
    and strictly positive.
    """
    if not (0.0 < eps_n < 1.0 and 0.0 <= eps_T < 1.0 and 0.0 <= eps_aniso < 1.0):
        raise ValueError("contrast amplitudes must lie in [0, 1)")
    center = 0.5 * (domain.lo + domain.hi)
    edges = domain.edge_lengths()
    w = width_frac * edges

    def phi(r):
        z = (r - center) / w
        bump = np.exp(-0.5 * np.sum(z * z, axis=1))
        # flatten toward the walls so wall-shell surface terms vanish
        s = np.ones(r.shape[0])
        for k in range(3):
            u = np.clip((r[:, k] - domain.lo[k]) / edges[k], 0.0, 1.0)
            s = s * np.sin(np.pi * u) ** 2
        return bump * s

    def dens(r):
        return 1.0 + eps_n * phi(r)

    def vmean(r):
        return np.zeros((r.shape[0], 3))

    def vvar(r):
        p = phi(r)
        var = np.empty((r.shape[0], 3))
        for k in range(3):
            if k == axis:
                var[:, k] = T0 * (1.0 - eps_T * p)
            else:
                var[:, k] = T0 * (1.0 + eps_aniso)
        return var

    return InitialPdfSpec(dens, vmean, vvar, 1.0 + eps_n, label="pressure-contrast")


# ---------------------------------------------------------------------------
# replica ensemble


@dataclass
class ReplicaEnsemble:
    replicas: list
    domain: DomainSpec
    seed: int
    stream_ids: list
    acceptance: float = 1.0

    @property
    def m(self) -> int:
        return len(self.replicas)

    @property
    def n(self) -> int:
        return self.replicas[0].current.n if self.replicas else 0

    def advance_to(self, t: float) -> None:
        for traj in self.replicas:
            if traj.current.time < t:
                simulate(traj, t_end=t)

    def pooled_samples(self):
        r = np.concatenate([traj.current.positions for traj in self.replicas])
        v = np.concatenate([traj.current.velocities for traj in self.replicas])
        return r, v

    def reversed_copy(self):
        from .dynamics import time_reverse

        reps = []
        for traj in self.replicas:
            st = time_reverse(traj.current)
            reps.append(Trajectory(st, self.domain))
        return ReplicaEnsemble(reps, self.domain, self.seed, list(self.stream_ids))


def sample_initial(spec: InitialPdfSpec, domain: DomainSpec, n_particles: int,
                   m_replicas: int, seed: int, theta_variant: str = "B") -> ReplicaEnsemble:
    """Draw M i.i.d. replicas of N particles from the factorized profile.

    Positions are proposed over the full box from the spatial profile
    (uniform proposal thinned by density/sup), then the whole configuration
    is accepted iff its ensemble theta is 1. Configuration-level acceptance
    below 1e-4 raises (packing too dense for rejection sampling).
    """
    replicas = []
    proposals = 0
    accepts = 0
    for rep in range(m_replicas):
        rng = stream(seed, "init", rep)
        while True:
            proposals += 1
            if proposals > 20000 and accepts < proposals * 1e-4:
                raise RuntimeError("rejection-rate failure: acceptance below 1e-4")
            pos = np.empty((n_particles, 3))
            for i in range(n_particles):
                while True:
                    cand = rng.uniform(domain.lo, domain.hi, size=(1, 3))
                    if rng.uniform() * spec.density_sup <= float(spec.density(cand)[0]):
                        pos[i] = cand[0]
                        break
            if ensemble_theta(NBodyConfiguration(pos), domain, theta_variant) == 1.0:
                accepts += 1
                break
        mu = spec.velocity_mean(pos)
        var = spec.velocity_var(pos)
        vel = mu + np.sqrt(var) * rng.normal(size=(n_particles, 3))
        replicas.append(Trajectory(NBodyState(pos, vel, 0.0), domain))
    ens = ReplicaEnsemble(replicas, domain, seed, list(range(m_replicas)))
    ens.acceptance = accepts / proposals
    return ens


# ---------------------------------------------------------------------------
# KDE kernels


@njit(cache=True)
def _box_mass(r_s, lo, hi, hr):  # pragma: no cover - jitted
    s = r_s.shape[0]
    w = np.empty(s)
    for k in range(s):
        acc = 1.0
        for j in range(3):
            a = (hi[j] - r_s[k, j]) / (SQRT2 * hr[j])
            b = (lo[j] - r_s[k, j]) / (SQRT2 * hr[j])
            acc *= 0.5 * (math.erf(a) - math.erf(b))
        w[k] = acc
    return w


@njit(cache=True)
def _kde_phase_numba(r_s, v_s, invw, hr, hv, rp, vp, scale, want_derivs,
                     val, grad, lap):  # pragma: no cover - jitted
    s = r_s.shape[0]
    p = rp.shape[0]
    lognorm = 0.0
    for j in range(3):
        lognorm -= math.log(hr[j]) + math.log(hv[j]) + LOG_2PI
    cnorm = math.exp(lognorm)
    for q in range(p):
        acc = 0.0
        g0 = 0.0
        g1 = 0.0
        g2 = 0.0
        lp = 0.0
        for k in range(s):
            e = 0.0
            d0 = (rp[q, 0] - r_s[k, 0]) / hr[0]
            d1 = (rp[q, 1] - r_s[k, 1]) / hr[1]
            d2 = (rp[q, 2] - r_s[k, 2]) / hr[2]
            e += d0 * d0 + d1 * d1 + d2 * d2
            u0 = (vp[q, 0] - v_s[k, 0]) / hv[0]
            u1 = (vp[q, 1] - v_s[k, 1]) / hv[1]
            u2 = (vp[q, 2] - v_s[k, 2]) / hv[2]
            e += u0 * u0 + u1 * u1 + u2 * u2
            a = math.exp(-0.5 * e) * invw[k]
            acc += a
            if want_derivs:
                g0 -= a * d0 / hr[0]
                g1 -= a * d1 / hr[1]
                g2 -= a * d2 / hr[2]
                lp += a * ((d0 * d0 - 1.0) / (hr[0] * hr[0])
                           + (d1 * d1 - 1.0) / (hr[1] * hr[1])
                           + (d2 * d2 - 1.0) / (hr[2] * hr[2]))
        val[q] = scale * cnorm * acc
        if want_derivs:
            grad[q, 0] = scale * cnorm * g0
            grad[q, 1] = scale * cnorm * g1
            grad[q, 2] = scale * cnorm * g2
            lap[q] = scale * cnorm * lp


@njit(cache=True)
def _kde_marginal_numba(r_s, invw, hr, rp, scale, val, grad):  # pragma: no cover
    s = r_s.shape[0]
    p = rp.shape[0]
    lognorm = 0.0
    for j in range(3):
        lognorm -= math.log(hr[j]) + 0.5 * LOG_2PI
    cnorm = math.exp(lognorm)
    for q in range(p):
        acc = 0.0
        g0 = 0.0
        g1 = 0.0
        g2 = 0.0
        for k in range(s):
            d0 = (rp[q, 0] - r_s[k, 0]) / hr[0]
            d1 = (rp[q, 1] - r_s[k, 1]) / hr[1]
            d2 = (rp[q, 2] - r_s[k, 2]) / hr[2]
            a = math.exp(-0.5 * (d0 * d0 + d1 * d1 + d2 * d2)) * invw[k]
            acc += a
            g0 -= a * d0 / hr[0]
            g1 -= a * d1 / hr[1]
            g2 -= a * d2 / hr[2]
        val[q] = scale * cnorm * acc
        grad[q, 0] = scale * cnorm * g0
        grad[q, 1] = scale * cnorm * g1
        grad[q, 2] = scale * cnorm * g2


_verf = np.vectorize(math.erf, otypes=[np.float64])


def _box_mass_numpy(r_s, lo, hi, hr):
    a = _verf((hi[None, :] - r_s) / (SQRT2 * hr[None, :]))
    b = _verf((lo[None, :] - r_s) / (SQRT2 * hr[None, :]))
    return np.prod(0.5 * (a - b), axis=1)


def _kde_phase_numpy(r_s, v_s, invw, hr, hv, rp, vp, scale, want_derivs, val, grad, lap):
    cnorm = 1.0 / (np.prod(hr) * np.prod(hv) * (2.0 * np.pi) ** 3)
    chunk = max(1, int(2_000_000 / max(1, rp.shape[0])))
    val[:] = 0.0
    if want_derivs:
        grad[:] = 0.0
        lap[:] = 0.0
    for s0 in range(0, r_s.shape[0], chunk):
        s1 = min(s0 + chunk, r_s.shape[0])
        dr = (rp[:, None, :] - r_s[None, s0:s1, :]) / hr[None, None, :]
        dv = (vp[:, None, :] - v_s[None, s0:s1, :]) / hv[None, None, :]
        e = np.sum(dr * dr, axis=2) + np.sum(dv * dv, axis=2)
        a = np.exp(-0.5 * e) * invw[None, s0:s1]
        val += a.sum(axis=1)
        if want_derivs:
            grad -= np.einsum("ps,psj->pj", a, dr / hr[None, None, :])
            lap += np.einsum("ps,ps->p", a, np.sum((dr * dr - 1.0) / (hr * hr)[None, None, :], axis=2))
    val *= scale * cnorm
    if want_derivs:
        grad *= scale * cnorm
        lap *= scale * cnorm


def _kde_marginal_numpy(r_s, invw, hr, rp, scale, val, grad):
    cnorm = 1.0 / (np.prod(hr) * (2.0 * np.pi) ** 1.5)
    chunk = max(1, int(2_000_000 / max(1, rp.shape[0])))
    val[:] = 0.0
    grad[:] = 0.0
    for s0 in range(0, r_s.shape[0], chunk):
        s1 = min(s0 + chunk, r_s.shape[0])
        dr = (rp[:, None, :] - r_s[None, s0:s1, :]) / hr[None, None, :]
        e = np.sum(dr * dr, axis=2)
        a = np.exp(-0.5 * e) * invw[None, s0:s1]
        val += a.sum(axis=1)
        grad -= np.einsum("ps,psj->pj", a, dr / hr[None, None, :])
    val *= scale * cnorm
    grad *= scale * cnorm


def _silverman(data: np.ndarray) -> np.ndarray:
    """Per-coordinate bandwidth 0.9 min(sd, iqr/1.349) S^(-1/10) for 6-D data."""
    s = data.shape[0]
    h = np.empty(data.shape[1])
    for j in range(data.shape[1]):
        sd = float(np.std(data[:, j]))
        q75, q25 = np.percentile(data[:, j], [75.0, 25.0])
        iqr = float(q75 - q25) / 1.349
        cands = [x for x in (sd, iqr) if x > 0.0]
        if not cands:
            raise ValueError("degenerate bandwidth: zero sample spread in a coordinate")
        h[j] = 0.9 * min(cands) * s ** (-0.1)
    return h


class SmoothPdf:
    """Gaussian product-kernel estimate of the 1-body PDF, mass N in the box."""

    def __init__(self, r_samples, v_samples, n_target, domain: DomainSpec,
                 hr=None, hv=None):
        self.r = np.ascontiguousarray(r_samples, dtype=np.float64)
        self.v = np.ascontiguousarray(v_samples, dtype=np.float64)
        if self.r.shape != self.v.shape or self.r.ndim != 2:
            raise ValueError("samples must be matching (S, 3) arrays")
        self.n_target = float(n_target)
        self.domain = domain
        self.hr = _silverman(self.r) if hr is None else np.broadcast_to(
            np.asarray(hr, dtype=np.float64), (3,)).copy()
        self.hv = _silverman(self.v) if hv is None else np.broadcast_to(
            np.asarray(hv, dtype=np.float64), (3,)).copy()
        if np.any(self.hr <= 0.0) or np.any(self.hv <= 0.0):
            raise ValueError("bandwidths must be positive")
        if USE_NUMBA:
            w = _box_mass(self.r, domain.lo, domain.hi, self.hr)
        else:
            w = _box_mass_numpy(self.r, domain.lo, domain.hi, self.hr)
        self.invw = 1.0 / w
        self.scale = self.n_target / self.r.shape[0]

    @property
    def n_samples(self) -> int:
        return self.r.shape[0]

    def evaluate(self, r_probes, v_probes, derivs: bool = True):
        """Value, spatial gradient, spatial Laplacian at phase probes."""
        rp = np.atleast_2d(np.asarray(r_probes, dtype=np.float64))
        vp = np.atleast_2d(np.asarray(v_probes, dtype=np.float64))
        p = rp.shape[0]
        val = np.empty(p)
        grad = np.empty((p, 3))
        lap = np.empty(p)
        fn = _kde_phase_numba if USE_NUMBA else _kde_phase_numpy
        fn(self.r, self.v, self.invw, self.hr, self.hv,
           np.ascontiguousarray(rp), np.ascontiguousarray(vp),
           self.scale, derivs, val, grad, lap)
        if derivs:
            return val, grad, lap
        return val

    def value(self, r, v) -> float:
        return float(self.evaluate(r, v, derivs=False)[0])

    def marginal(self, r_probes):
        """Spatial marginal n(r) = ∫ rho dv and its gradient."""
        rp = np.atleast_2d(np.asarray(r_probes, dtype=np.float64))
        val = np.empty(rp.shape[0])
        grad = np.empty((rp.shape[0], 3))
        fn = _kde_marginal_numba if USE_NUMBA else _kde_marginal_numpy
        fn(self.r, self.invw, self.hr, np.ascontiguousarray(rp), self.scale, val, grad)
        return val, grad

    def sample_positions(self, rng: np.random.Generator, count: int):
        """Draw positions from the spatial marginal n/N (kernel mixture)."""
        idx = rng.integers(0, self.n_samples, size=count)
        out_r = np.empty((count, 3))
        pending = np.arange(count)
        centers = self.r[idx]
        while pending.size:
            cand = centers[pending] + self.hr[None, :] * rng.normal(size=(pending.size, 3))
            ok = np.all((cand >= self.domain.lo) & (cand <= self.domain.hi), axis=1)
            out_r[pending[ok]] = cand[ok]
            pending = pending[~ok]
        return out_r, idx

    def sample_phase(self, rng: np.random.Generator, count: int):
        """Draw phase points from rho/N (kernel mixture, box-truncated)."""
        out_r, idx = self.sample_positions(rng, count)
        out_v = self.v[idx] + self.hv[None, :] * rng.normal(size=(count, 3))
        return out_r, out_v

    def velocity_moment(self, r_probes):
        """Spatial density n(r) and local mean velocity of the estimator."""
        rp = np.atleast_2d(np.asarray(r_probes, dtype=np.float64))
        val = np.empty(rp.shape[0])
        m1 = np.empty((rp.shape[0], 3))
        cnorm = self.scale / float(np.prod(self.hr * math.sqrt(2.0 * math.pi)))
        for start in range(0, rp.shape[0], 256):
            stop = min(start + 256, rp.shape[0])
            z = (rp[start:stop, None, :] - self.r[None, :, :]) / self.hr[None, None, :]
            w = np.exp(-0.5 * np.sum(z * z, axis=2)) * self.invw[None, :]
            val[start:stop] = cnorm * np.sum(w, axis=1)
            m1[start:stop] = cnorm * (w @ self.v)
        vbar = m1 / np.where(val[:, None] > 0.0, val[:, None], 1.0)
        return val, vbar

    def reversed(self) -> "SmoothPdf":
        """Estimator for the time-reversed ensemble: velocities negated."""
        return SmoothPdf(self.r.copy(), -self.v, self.n_target, self.domain,
                         hr=self.hr, hv=self.hv)


def lattice_pdf(domain: DomainSpec, n_target: float, density=None, axis: int = 0,
                shape=(128, 24, 24), hr=None, velocity=(0.0, 0.0, 0.0),
                hv: float = 0.25) -> SmoothPdf:
    """Synthetic pdf whose kernels sit on a regular spatial lattice.

    Kernel coordinates along `axis` are quantiles of the given 1-D density
    profile (uniform when None); the transverse axes carry uniform lattices.
    With the default bandwidth of 1.3 lattice spacings the kernel comb is
    flat transversally to near machine precision, so the realized marginal
    varies only along the graded axis and is mirror-symmetric about the box
    midplanes. All kernels share one velocity, so local velocity moments
    are exact. Intended for checks against profiles known in closed form.
    """
    if len(shape) != 3:
        raise ValueError("shape must give three per-axis kernel counts")
    coords = []
    spacings = []
    for j in range(3):
        lo, hi = float(domain.lo[j]), float(domain.hi[j])
        m = int(shape[j])
        q = (np.arange(m) + 0.5) / m
        if j == axis and density is not None:
            t = np.linspace(lo, hi, 4097)
            f = np.asarray(density(t), dtype=np.float64)
            if np.any(f < 0.0):
                raise ValueError("density profile must be non-negative")
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]))])
            if cdf[-1] <= 0.0:
                raise ValueError("density profile has zero mass")
            x = np.interp(q * cdf[-1], cdf, t)
        else:
            x = lo + q * (hi - lo)
        coords.append(x)
        gaps = np.diff(x)
        spacings.append(float(gaps.max()) if gaps.size else hi - lo)
    xx, yy, zz = np.meshgrid(*coords, indexing="ij")
    r = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    v = np.tile(np.asarray(velocity, dtype=np.float64), (r.shape[0], 1))
    if hr is None:
        hr = 1.3 * np.asarray(spacings)
    return SmoothPdf(r, v, n_target, domain, hr=hr, hv=hv)


def windowed_ramp(amp: float, lo: float = 0.18, hi: float = 0.82):
    """Monotone quintic-smoothstep profile, flat outside [lo, hi].

    Returns a callable mapping the normalized coordinate u to the
    profile value 1 + amp*s(w) and its first two u-derivatives, where
    w = clip((u - lo)/(hi - lo), 0, 1) and s is the C2 smoothstep
    w^3 (10 - 15 w + 6 w^2). Both derivatives vanish identically in
    the flat shoulders, so states built on it carry no normal density
    slope at wall margins inside the shoulders.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("window must satisfy 0 <= lo < hi <= 1")

    def profile(u):
        u = np.asarray(u, dtype=np.float64)
        span = hi - lo
        w = np.clip((u - lo) / span, 0.0, 1.0)
        s = w ** 3 * (10.0 - 15.0 * w + 6.0 * w * w)
        ds = 30.0 * (w * (1.0 - w)) ** 2
        dds = 60.0 * w * (1.0 - w) * (1.0 - 2.0 * w)
        return 1.0 + amp * s, amp * ds / span, amp * dds / span ** 2

    return profile


def windowed_bump(amp: float, lo: float = 0.18, hi: float = 0.82):
    """Symmetric raised-cosine bump profile, flat outside [lo, hi].

    Returns a callable mapping the normalized coordinate u to
    1 + amp*sin^2(pi w) and its first two u-derivatives, with
    w = clip((u - lo)/(hi - lo), 0, 1); derivatives are zeroed in the
    shoulders. The first derivative is continuous everywhere, the
    second has bounded jumps at the window edges.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError("window must satisfy 0 <= lo < hi <= 1")

    def profile(u):
        u = np.asarray(u, dtype=np.float64)
        span = hi - lo
        t = (u - lo) / span
        inside = (t > 0.0) & (t < 1.0)
        w = np.clip(t, 0.0, 1.0)
        p = 1.0 + amp * np.sin(np.pi * w) ** 2
        dp = np.where(inside, amp * np.pi * np.sin(2.0 * np.pi * w), 0.0)
        ddp = np.where(inside,
                       2.0 * amp * np.pi ** 2 * np.cos(2.0 * np.pi * w), 0.0)
        return p, dp / span, ddp / span ** 2

    return profile


class ProfilePdf:
    """Analytic phase-space density: a one-axis profile times a Maxwellian.

    The position density is proportional to profile(u) along `axis`
    (u the box-normalized coordinate) and uniform across the other two
    axes; velocities are an isotropic Gaussian at temperature T about
    drift V0. evaluate returns exact values and exact spatial first
    and second derivatives, so identities that hold for the continuum
    state can be checked free of smoothing error. The profile callable
    maps u in [0, 1] to (value, d/du, d2/du2) with value >= 0.
    """

    def __init__(self, domain: DomainSpec, n_target: float, profile,
                 axis: int = 0, T: float = 1.0, V0=(0.0, 0.0, 0.0)):
        self.domain = domain
        self.n_target = float(n_target)
        self.profile = profile
        self.axis = int(axis)
        self.T = float(T)
        self.V0 = np.asarray(V0, dtype=np.float64)
        if self.T <= 0.0:
            raise ValueError("temperature must be positive")
        if self.axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")
        self._lo = float(domain.lo[self.axis])
        self._edge = float(domain.hi[self.axis] - domain.lo[self.axis])
        u = np.linspace(0.0, 1.0, 8193)
        p = np.asarray(profile(u)[0], dtype=np.float64)
        if np.any(p < 0.0):
            raise ValueError("profile must be non-negative")
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]))])
        if cdf[-1] <= 0.0:
            raise ValueError("profile has zero mass")
        self._grid = u
        self._cdf = cdf / cdf[-1]
        mean_p = float(cdf[-1]) / (u.size - 1)
        box_vol = float(np.prod(np.asarray(domain.hi) - np.asarray(domain.lo)))
        self._n0 = self.n_target / (box_vol * mean_p)

    def evaluate(self, r, v, derivs: bool = False):
        r = np.atleast_2d(np.asarray(r, dtype=np.float64))
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        u = (r[:, self.axis] - self._lo) / self._edge
        p, dp, ddp = self.profile(u)
        dv = v - self.V0[None, :]
        g = ((2.0 * np.pi * self.T) ** -1.5
             * np.exp(-np.sum(dv * dv, axis=1) / (2.0 * self.T)))
        val = self._n0 * np.asarray(p) * g
        if not derivs:
            return val
        grad = np.zeros_like(r)
        grad[:, self.axis] = self._n0 * np.asarray(dp) * g / self._edge
        lap = self._n0 * np.asarray(ddp) * g / self._edge ** 2
        return val, grad, lap

    def sample_positions(self, rng: np.random.Generator, count: int):
        u = np.interp(rng.random(count), self._cdf, self._grid)
        r = np.empty((count, 3))
        for j in range(3):
            lo, hi = float(self.domain.lo[j]), float(self.domain.hi[j])
            if j == self.axis:
                r[:, j] = lo + u * (hi - lo)
            else:
                r[:, j] = lo + rng.random(count) * (hi - lo)
        return r, None

    def sample_phase(self, rng: np.random.Generator, count: int):
        r, _ = self.sample_positions(rng, count)
        v = self.V0[None, :] + math.sqrt(self.T) * rng.normal(size=(count, 3))
        return r, v


def estimate_pdf(ensemble: ReplicaEnsemble, t: float) -> SmoothPdf:
    for traj in ensemble.replicas:
        if abs(traj.current.time - t) > 1e-9 * (1.0 + abs(t)):
            raise ValueError("replicas not advanced to the requested time")
    r, v = ensemble.pooled_samples()
    return SmoothPdf(r, v, ensemble.n, ensemble.domain)


# ---------------------------------------------------------------------------
# Maxwellian reference


@dataclass(frozen=True)
class MaxwellianParams:
    n_o: float
    T_o: float
    V_o: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "V_o", np.asarray(self.V_o, dtype=np.float64))
        if self.n_o <= 0.0 or self.T_o <= 0.0:
            raise ValueError("n_o and T_o must be positive")


def maxwellian_eval(v, p: MaxwellianParams, m: float = 1.0):
    """n_o pi^(-3/2) (2 T_o/m)^(-3/2) exp(-m (v-V_o)^2 / (2 T_o))."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    d = v - p.V_o[None, :]
    w2 = np.sum(d * d, axis=1)
    pref = p.n_o * np.pi ** (-1.5) * (2.0 * p.T_o / m) ** (-1.5)
    out = pref * np.exp(-m * w2 / (2.0 * p.T_o))
    return out if out.size > 1 else float(out[0])


def fit_maxwellian(source, domain: DomainSpec = None, n_target: float = None,
                   m: float = 1.0) -> MaxwellianParams:
    """Moment-matched Maxwellian: n_o = N/V_acc, V_o = mean, T_o = m var/3."""
    if isinstance(source, ProfilePdf):
        domain = source.domain if domain is None else domain
        n_target = source.n_target if n_target is None else n_target
        return MaxwellianParams(n_o=n_target / domain.accessible_volume(),
                                T_o=m * source.T, V_o=source.V0.copy())
    if isinstance(source, SmoothPdf):
        v = source.v
        domain = source.domain if domain is None else domain
        n_target = source.n_target if n_target is None else n_target
    else:
        v = np.asarray(source, dtype=np.float64)
        if domain is None or n_target is None:
            raise ValueError("raw samples need domain and n_target")
    v_o = v.mean(axis=0)
    dev = v - v_o[None, :]
    var = float(np.mean(np.sum(dev * dev, axis=1)))
    if var <= 0.0:
        raise ValueError("non-positive velocity variance")
    t_o = m * var / 3.0
    n_o = n_target / domain.accessible_volume()
    return MaxwellianParams(n_o=n_o, T_o=t_o, V_o=v_o)


def distance_to_maxwellian(pdf: SmoothPdf, p: MaxwellianParams, m: float = 1.0,
                           n_draws: int = 65536, seed: int = 0, n_batches: int = 32):
    """L2 distance over the box between rho/N and the boxed Maxwellian.

    Mixture importance sampling with proposal (f+g)/2 where f = rho/N and
    g = boundary-theta uniform x Maxwellian, both unit mass. Returns
    (distance, standard error).
    """
    rng = stream(seed, "distmaxw")
    dom = pdf.domain
    v_acc = dom.accessible_volume()
    n_draws = max(1, int(n_draws) // (2 * n_batches)) * 2 * n_batches
    half = n_draws // 2

    rf, vf = pdf.sample_phase(rng, half)
    alo = dom.accessible_lo()
    ahi = dom.accessible_hi()
    rg = rng.uniform(alo, ahi, size=(half, 3))
    vg = p.V_o[None, :] + np.sqrt(p.T_o / m) * rng.normal(size=(half, 3))
    r_all = np.concatenate([rf, rg])
    v_all = np.concatenate([vf, vg])

    f = pdf.evaluate(r_all, v_all, derivs=False) / pdf.n_target
    theta = boundary_theta(dom, r_all)
    g = theta * maxwellian_eval(v_all, p, m) / (p.n_o * v_acc)
    h = 0.5 * (f + g)
    phi = np.where(h > 0.0, (f - g) ** 2 / np.where(h > 0.0, h, 1.0), 0.0)

    # each batch takes an equal share of f-draws and of g-draws
    phi_f = phi[:half].reshape(n_batches, -1)
    phi_g = phi[half:].reshape(n_batches, -1)
    batches = np.concatenate([phi_f, phi_g], axis=1).mean(axis=1)
    est = float(batches.mean())
    err = float(batches.std(ddof=1) / np.sqrt(n_batches))
    dist = math.sqrt(max(est, 0.0))
    dist_err = err / (2.0 * dist) if dist > 0.0 else math.sqrt(max(err, 0.0))
    return dist, dist_err


def stratified_probes(domain: DomainSpec, v_scale: float, count: int, seed: int = 0):
    """Stratified phase probes: latin-hypercube box positions, velocity ball.

    The velocity ball radius is 5 v_scale (thermal-speed scale).
    """
    rng = stream(seed, "probes")
    u = np.empty((count, 3))
    for j in range(3):
        u[:, j] = (rng.permutation(count) + rng.uniform(size=count)) / count
    r = domain.lo[None, :] + u * (domain.hi - domain.lo)[None, :]
    dirs = rng.normal(size=(count, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rad = 5.0 * v_scale * rng.uniform(size=count) ** (1.0 / 3.0)
    v = dirs * rad[:, None]
    return r, v


def scale_length(pdf: SmoothPdf, probes=None, count: int = 4096, seed: int = 0,
                 grad_floor: float = 1e-10, interior_margin: float = None) -> float:
    """Infimum over probes of |d ln rho / d r|^(-1); inf when flat.

    Default probes avoid the wall shell (clearance sigma/2 plus two
    bandwidths, where the estimator is boundary-contaminated); probes
    passed explicitly are used verbatim.
    """
    dom = pdf.domain
    if probes is None:
        v_scale = float(np.sqrt(np.mean(np.sum(pdf.v**2, axis=1)) / 3.0))
        rp, vp = stratified_probes(dom, v_scale, count, seed)
        if interior_margin is None:
            interior_margin = 0.5 * dom.sigma + 2.0 * float(np.max(pdf.hr))
        if not dom.periodic:
            keep = (np.all(rp >= dom.lo[None, :] + interior_margin, axis=1)
                    & np.all(rp <= dom.hi[None, :] - interior_margin, axis=1))
            if np.any(keep):
                rp = rp[keep]
                vp = vp[keep]
    else:
        rp, vp = probes
    val, grad, _ = pdf.evaluate(rp, vp)
    ok = val > 0.0
    if not np.any(ok):
        return np.inf
    rate = np.linalg.norm(grad[ok], axis=1) / val[ok]
    edge = float(np.max(dom.edge_lengths()))
    gmax = float(rate.max())
    if gmax <= grad_floor / edge:
        return np.inf
    return 1.0 / gmax
