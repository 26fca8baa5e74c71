"""Occupation coefficients of the hard-sphere ensemble and their identities.

The 1- and 2-body occupation coefficients are nested configuration
integrals of the renormalized 1-body PDF against hard-sphere exclusion
factors, normalized per nested level so that every coefficient tends
to 1 in the dilute limit. That normalization makes each coefficient a
conditional probability: positions are proposed from the spatial
marginal of the PDF estimate, wall and renormalization factors enter
as importance weights, and the coefficient is the weighted fraction of
mutually consistent configurations that also clear the anchors. The
proposal normalization cancels in the ratio, and the values stay in
(0, 1] by construction.

The coefficient k1 solves a fixed point (it renormalizes the PDF under
its own defining integral), handled by damped iteration on a spatial
grid with one shared configuration pool, which makes the iteration a
deterministic contraction for a given seed.

On the support of the pairwise exclusion chain the factorized
triple-exclusion factors of the causal chain variant equal 1 almost
surely (each summand distance already exceeds sigma), so sampled
values of k1, k2, k3 coincide for both chain variants and the variant
tag is metadata. The variants separate only on contact sets of measure
zero; the contact-restricted gradient of k2 is where that distinction
is exact, and evaluate_grad_k2 implements it.

Differential identities tie the gradient, the convective derivative,
and the Laplacian of k1 to contact-sphere integrals. Because the
coefficients are level-normalized ratios, the exact integrand carries
the pair numerator divided by the one-body denominator (a cavity
ratio slightly above the plain pair coefficient); the checkers
estimate that ratio directly by drawing one extra point per pool
configuration. The contact-sphere integrals use a deterministic
Gauss-Legendre product quadrature over directions, spectrally accurate
for the smooth integrands, with each direction carrying its own block
of pool configurations; discrepancies therefore shrink as the inverse
square root of the configuration budget.
"""
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .geometry import DomainSpec, boundary_theta, strong_heaviside
from .ensemble import SmoothPdf
from .rng import stream

__all__ = [
    "OccupationField",
    "PairOccupation",
    "IdentityReport",
    "estimate_k1",
    "estimate_k2",
    "evaluate_grad_k2",
    "check_grad_k1_identity",
    "check_streaming_identity",
    "check_laplacian_identity",
    "bg_sweep",
]


# ---------------------------------------------------------------------------
# vectorized exclusion kernels


def _mutual_ok(pool: np.ndarray, sigma: float) -> np.ndarray:
    """Pairwise exclusion indicator among the K points of each configuration."""
    c, k, _ = pool.shape
    if k < 2:
        return np.ones(c)
    out = np.empty(c, dtype=bool)
    s2 = sigma * sigma
    block = max(1, 12_000_000 // max(1, k * k))
    for start in range(0, c, block):
        stop = min(start + block, c)
        p = pool[start:stop]
        sq = np.sum(p * p, axis=2)
        d2 = sq[:, :, None] + sq[:, None, :] - 2.0 * (p @ p.transpose(0, 2, 1))
        d2[:, np.arange(k), np.arange(k)] = np.inf
        out[start:stop] = np.all(d2 > s2, axis=(1, 2))
    return out.astype(np.float64)


def _anchor_ok(pool: np.ndarray, anchors, sigma: float) -> np.ndarray:
    """Indicator that every pool point clears every fixed anchor."""
    out = np.ones(pool.shape[0], dtype=bool)
    s2 = sigma * sigma
    for a in anchors:
        d = pool - np.asarray(a, dtype=np.float64)[None, None, :]
        out &= np.all(np.sum(d * d, axis=2) > s2, axis=1)
    return out.astype(np.float64)


def _grid_ok(pool: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    """Anchor-exclusion indicator per (configuration, grid cell), as float."""
    c, k, _ = pool.shape
    g = centers.shape[0]
    out = np.empty((c, g))
    s2 = sigma * sigma
    csq = np.sum(centers * centers, axis=1)
    block = max(1, 6_000_000 // max(1, k * g))
    for start in range(0, c, block):
        stop = min(start + block, c)
        p = pool[start:stop].reshape(-1, 3)
        d2 = np.sum(p * p, axis=1)[:, None] + csq[None, :] - 2.0 * (p @ centers.T)
        out[start:stop] = np.all(d2.reshape(stop - start, k, g) > s2, axis=1)
    return out


def _margin_positions(pdf: SmoothPdf, domain: DomainSpec, rng, count: int):
    """Proposal draws restricted to the wall-admissible region.

    The wall factor is identically 1 on the returned points, so
    importance weights reduce to 1/k1 and keep light tails. Returns
    (points, accepted, proposed); the acceptance fraction restores the
    full-measure normalization where a non-ratio quantity needs it.
    """
    out = np.empty((count, 3))
    got = 0
    accepted = 0
    proposed = 0
    rounds = 0
    while got < count:
        need = count - got
        batch = need + max(256, need // 2)
        pts, _ = pdf.sample_positions(rng, batch)
        ok = boundary_theta(domain, pts) > 0.0
        n_ok = int(ok.sum())
        proposed += batch
        accepted += n_ok
        take = min(need, n_ok)
        if take:
            out[got:got + take] = pts[ok][:take]
            got += take
        rounds += 1
        if rounds > 60 and accepted == 0:
            raise RuntimeError("wall margin rejects all proposal mass")
    return out, accepted, proposed


def _sphere_quad(count: int):
    """Deterministic sphere quadrature: Gauss-Legendre rings, staggered azimuths.

    Returns (directions, weights) with weights summing to 1. Spectrally
    accurate for smooth integrands, so direction error stays below the
    configuration-pool noise at every budget.
    """
    n_theta = max(4, int(math.sqrt(count / 2.0)))
    nodes, wts = np.polynomial.legendre.leggauss(n_theta)
    m = 2 * n_theta
    phi = 2.0 * math.pi * (np.arange(m) + 0.5) / m
    ct = np.repeat(nodes, m)
    st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, None))
    # stagger rings so azimuth nodes do not align across rings
    off = np.repeat(np.arange(n_theta) * (math.pi / m), m)
    ph = np.tile(phi, n_theta) + off
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
    w = np.repeat(wts, m) / (2.0 * m)
    return dirs, w


# ---------------------------------------------------------------------------
# result types


@dataclass
class OccupationField:
    """Grid realization of k1 over the box with per-cell MC errors."""

    domain: DomainSpec
    grid_shape: tuple
    k1: np.ndarray
    stderr: np.ndarray
    residuals: list = dc_field(default_factory=list)
    samples: int = 0
    seed: int = 0
    variant: str = "B"

    def cell_centers(self) -> np.ndarray:
        axes = []
        for j, g in enumerate(self.grid_shape):
            edge = self.domain.hi[j] - self.domain.lo[j]
            axes.append(self.domain.lo[j] + (np.arange(g) + 0.5) * edge / g)
        xx, yy, zz = np.meshgrid(*axes, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def k1_at(self, points) -> np.ndarray:
        """Trilinear interpolation of cell-center values, clamped at edges."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        g = np.asarray(self.grid_shape)
        edge = self.domain.hi - self.domain.lo
        out = np.empty(pts.shape[0])
        block = 4_000_000
        for start in range(0, pts.shape[0], block):
            stop = min(start + block, pts.shape[0])
            u = (pts[start:stop] - self.domain.lo[None, :]) / edge[None, :]
            u = u * g[None, :] - 0.5
            u = np.clip(u, 0.0, g[None, :] - 1.0)
            i0 = np.minimum(u.astype(np.int64), g[None, :] - 2)
            f = u - i0
            acc = np.zeros(stop - start)
            for dx in (0, 1):
                wx = f[:, 0] if dx else 1.0 - f[:, 0]
                for dy in (0, 1):
                    wy = f[:, 1] if dy else 1.0 - f[:, 1]
                    for dz in (0, 1):
                        wz = f[:, 2] if dz else 1.0 - f[:, 2]
                        vals = self.k1[i0[:, 0] + dx, i0[:, 1] + dy,
                                       i0[:, 2] + dz]
                        acc += wx * wy * wz * vals
            out[start:stop] = acc
        return out

    def gradient_many(self, points) -> np.ndarray:
        """Grid differences of the interpolated field at grid spacing.

        Fourth-order central stencils where the wide stencil stays inside
        the box, second-order central elsewhere.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        edge = self.domain.hi - self.domain.lo
        out = np.empty((pts.shape[0], 3))
        for j in range(3):
            h = edge[j] / self.grid_shape[j]
            dp = np.zeros(3)
            dp[j] = h
            p1 = self.k1_at(pts + dp)
            m1 = self.k1_at(pts - dp)
            narrow = (p1 - m1) / (2.0 * h)
            wide_ok = (pts[:, j] - 2.0 * h >= self.domain.lo[j]) \
                & (pts[:, j] + 2.0 * h <= self.domain.hi[j])
            if np.any(wide_ok):
                p2 = self.k1_at(pts + 2.0 * dp)
                m2 = self.k1_at(pts - 2.0 * dp)
                high = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
                out[:, j] = np.where(wide_ok, high, narrow)
            else:
                out[:, j] = narrow
        return out

    def gradient_at(self, r) -> np.ndarray:
        return self.gradient_many(np.asarray(r, dtype=np.float64)[None, :])[0]

    def laplacian_many(self, points) -> np.ndarray:
        """Seven-point grid Laplacian at cell-width spacing per axis."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        edge = self.domain.hi - self.domain.lo
        c = self.k1_at(pts)
        tot = np.zeros(pts.shape[0])
        for j in range(3):
            h = edge[j] / self.grid_shape[j]
            dp = np.zeros(3)
            dp[j] = h
            up = self.k1_at(pts + dp)
            dn = self.k1_at(pts - dp)
            tot += (up - 2.0 * c + dn) / (h * h)
        return tot

    def laplacian_at(self, r) -> float:
        return float(self.laplacian_many(np.asarray(r, dtype=np.float64)[None, :])[0])

    def to_csv(self, path: str) -> None:
        centers = self.cell_centers()
        with open(path, "w") as fh:
            fh.write("x,y,z,k1,stderr\n")
            for row, k, e in zip(centers, self.k1.ravel(), self.stderr.ravel()):
                fh.write("%.17g,%.17g,%.17g,%.17g,%.17g\n"
                         % (row[0], row[1], row[2], k, e))


@dataclass
class PairOccupation:
    """Point estimate of k2 at a fixed pair of centers."""

    r1: np.ndarray
    r2: np.ndarray
    value: float
    stderr: float
    samples: int = 0
    variant: str = "B"

    def __post_init__(self):
        hi = 1.0 + 3.0 * self.stderr + 1e-12
        lo = -3.0 * self.stderr
        if not (lo < self.value <= hi):
            raise RuntimeError("k2 outside (0, 1] beyond 3 MC standard errors")


@dataclass
class IdentityReport:
    """One identity check: both sides and their relative discrepancy."""

    name: str
    point: list
    lhs: list
    rhs: list
    discrepancy: float
    samples: int

    def as_dict(self) -> dict:
        return {"identity": self.name, "point": self.point, "lhs": self.lhs,
                "rhs": self.rhs, "discrepancy": self.discrepancy,
                "samples": self.samples}

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


# ---------------------------------------------------------------------------
# k1 fixed point


def estimate_k1(pdf: SmoothPdf, domain: DomainSpec = None, samples: int = 200000,
                grid: int = 6, seed: int = 0, variant: str = "B",
                tol: float = 1e-3, max_iter: int = 50, damping: float = 0.5,
                k1_init: float = 1.0, n_batches: int = 32) -> OccupationField:
    """Fixed point of the nested occupation integral on a spatial grid.

    One pool of (N-1)-point configurations is shared by all iterations
    and all cells; only the renormalization weights change between
    iterations, so the residual history contracts deterministically.
    Each cell value is the weighted fraction of mutually consistent
    configurations that clear the cell center, hence at most 1.
    """
    domain = pdf.domain if domain is None else domain
    n = int(round(pdf.n_target))
    if n < 2:
        raise ValueError("occupation coefficients need at least two particles")
    gshape = (grid,) * 3 if np.isscalar(grid) else tuple(int(g) for g in grid)
    if len(gshape) != 3 or min(gshape) < 2:
        raise ValueError("grid must have at least 2 cells per axis")
    k_pts = n - 1
    rng = stream(seed, "k1pool")
    flat, _, _ = _margin_positions(pdf, domain, rng, samples * k_pts)
    pool = flat.reshape(samples, k_pts, 3)
    mutual = _mutual_ok(pool, domain.sigma)

    fld = OccupationField(domain=domain, grid_shape=gshape,
                          k1=np.full(gshape, float(k1_init)),
                          stderr=np.zeros(gshape), residuals=[],
                          samples=samples, seed=seed, variant=variant)
    centers = fld.cell_centers()
    survive = _grid_ok(pool, centers, domain.sigma).astype(np.uint8)
    n_cells = centers.shape[0]

    n_batches = min(n_batches, samples)
    per = max(1, samples // n_batches)

    def pass_over(cw):
        # blocked accumulation keeps the survival table uint8
        num = np.zeros(n_cells)
        for start in range(0, samples, per):
            stop = min(start + per, samples)
            num += cw[start:stop] @ survive[start:stop].astype(np.float64)
        return num

    cw = None
    for _ in range(max_iter):
        w = 1.0 / np.clip(fld.k1_at(flat), 1e-12, None)
        cw = np.prod(w.reshape(samples, k_pts), axis=1) * mutual
        den = float(cw.sum())
        if den <= 0.0:
            raise RuntimeError("proposal weights vanished")
        new = pass_over(cw).reshape(gshape) / den
        cur = fld.k1
        resid = float(np.max(np.abs(new - cur) / np.clip(cur, 1e-12, None)))
        fld.residuals.append(resid)
        if resid < tol:
            fld.k1 = new
            break
        fld.k1 = damping * cur + (1.0 - damping) * new
    else:
        raise RuntimeError("k1 fixed point did not converge in %d iterations"
                           % max_iter)

    # per-cell errors from batch means, each batch its own ratio
    cb = np.empty((n_batches, n_cells))
    for b in range(n_batches):
        rows = slice(b * per, min((b + 1) * per, samples))
        bden = float(cw[rows].sum())
        cb[b] = cw[rows] @ survive[rows].astype(np.float64) / max(bden, 1e-300)
    fld.stderr = (cb.std(axis=0, ddof=1) / math.sqrt(n_batches)).reshape(gshape)

    bad = (fld.k1 > 1.0 + 3.0 * fld.stderr + 1e-12) \
        | (fld.k1 <= -3.0 * fld.stderr)
    if np.any(bad):
        raise RuntimeError("k1 outside (0, 1] beyond 3 MC standard errors")
    fld.k1 = np.clip(fld.k1, 1e-12, 1.0)
    return fld


# ---------------------------------------------------------------------------
# k2 point estimates


def _estimate_ks(pdf: SmoothPdf, anchors, domain: DomainSpec, samples: int,
                 field: OccupationField, seed, n_batches: int = 32):
    """Level-normalized s-anchor coefficient: weighted survival ratio."""
    n = int(round(pdf.n_target))
    k_pts = n - len(anchors)
    if k_pts <= 0:
        return 1.0, 0.0
    rng = stream(seed, "ks", len(anchors))
    flat, _, _ = _margin_positions(pdf, domain, rng, samples * k_pts)
    pool = flat.reshape(samples, k_pts, 3)
    mutual = _mutual_ok(pool, domain.sigma)
    clear = _anchor_ok(pool, anchors, domain.sigma)
    if field is not None:
        w = 1.0 / np.clip(field.k1_at(flat), 1e-12, None)
    else:
        w = np.ones(flat.shape[0])
    cw = np.prod(w.reshape(samples, k_pts), axis=1) * mutual
    den = float(cw.sum())
    if den <= 0.0:
        raise RuntimeError("proposal weights vanished")
    est = float(cw @ clear) / den

    usable = (samples // n_batches) * n_batches
    per = usable // n_batches
    cb = np.empty(n_batches)
    for b in range(n_batches):
        rows = slice(b * per, (b + 1) * per)
        bden = float(cw[rows].sum())
        cb[b] = float(cw[rows] @ clear[rows]) / max(bden, 1e-300)
    err = float(cb.std(ddof=1) / math.sqrt(n_batches))
    return est, err


def estimate_k2(pdf: SmoothPdf, r1, r2, domain: DomainSpec = None,
                samples: int = 200000, field: OccupationField = None,
                seed: int = 0, variant: str = "B") -> PairOccupation:
    """MC estimate of the pair occupation coefficient at fixed centers."""
    domain = pdf.domain if domain is None else domain
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    if np.linalg.norm(r1 - r2) < domain.sigma * (1.0 - 1e-12):
        raise ValueError("pair centers overlap: |r1 - r2| < sigma")
    n = int(round(pdf.n_target))
    if n == 2:
        return PairOccupation(r1=r1, r2=r2, value=1.0, stderr=0.0,
                              samples=0, variant=variant)
    if field is None:
        field = estimate_k1(pdf, domain, samples=max(20000, samples // 4),
                            seed=seed + 1, variant=variant)
    est, err = _estimate_ks(pdf, [r1, r2], domain, samples, field, seed)
    return PairOccupation(r1=r1, r2=r2, value=est, stderr=err,
                          samples=samples, variant=variant)


# ---------------------------------------------------------------------------
# identity machinery


def _pick_dirs(samples: int) -> int:
    """Direction count growing with budget so errors scale as 1/sqrt."""
    return 2 * max(32, min(2048, samples // 512))


def _marginal_z(pdf: SmoothPdf, field: OccupationField, seed) -> float:
    """z = E[theta / k1] under the spatial marginal (fixed substream)."""
    rng = stream(seed, "zconst")
    pts, _ = pdf.sample_positions(rng, 200000)
    w = boundary_theta(pdf.domain, pts)
    w = w / np.clip(field.k1_at(pts), 1e-12, None)
    return float(w.mean())


def _direction_ratio(pdf: SmoothPdf, field: OccupationField, r1, r2_arr,
                     n_cfg: int, tag, seed, extra_anchor=None):
    """Per-direction cavity-normalized survival ratios for the identities.

    For each configuration, N - s integrated points plus one ghost
    point are drawn; the numerator is the anchored survival of the
    integrated points and the shared denominator is the mutual
    consistency of all N - s + 1 points. The ratio is the exact
    integrand factor of the contact identities (the plain pair
    coefficient times a cavity ratio). Configurations are assigned to
    the directions cyclically. Returns (per-direction ratios, z) with
    z the mean point weight, or (ones, None) when nothing integrates.
    """
    n = int(round(pdf.n_target))
    n_anchor = 2 if extra_anchor is None else 3
    kp = n - n_anchor
    n_dir = r2_arr.shape[0]
    if kp <= 0:
        return np.ones(n_dir), None
    per = max(1, n_cfg // n_dir)
    total = per * n_dir
    rng = stream(seed, tag, "dirpool")
    domain = pdf.domain
    sigma = domain.sigma
    s2 = sigma * sigma
    r1 = np.asarray(r1, dtype=np.float64)

    sums = np.zeros(n_dir)
    den_sum = 0.0
    w_sum = 0.0
    n_acc = 0
    n_prop = 0
    chunk = max(n_dir, 2_000_000 // (kp + 1))
    chunk -= chunk % n_dir
    done = 0
    while done < total:
        take = min(chunk, total - done)
        flat, acc, prop = _margin_positions(pdf, domain, rng, take * (kp + 1))
        n_acc += acc
        n_prop += prop
        full = flat.reshape(take, kp + 1, 3)
        w = 1.0 / np.clip(field.k1_at(flat), 1e-12, None)
        w_sum += float(w.sum())
        w = w.reshape(take, kp + 1)

        den_sum += float(np.sum(np.prod(w, axis=1)
                                * _mutual_ok(full, sigma)))

        pool = full[:, :kp, :]
        keep = _mutual_ok(pool, sigma)
        d = pool - r1[None, None, :]
        keep = keep * np.all(np.sum(d * d, axis=2) > s2, axis=1)
        idx = (done + np.arange(take)) % n_dir
        d = pool - r2_arr[idx][:, None, :]
        keep = keep * np.all(np.sum(d * d, axis=2) > s2, axis=1)
        if extra_anchor is not None:
            d = pool - np.asarray(extra_anchor, dtype=np.float64)[None, None, :]
            keep = keep * np.all(np.sum(d * d, axis=2) > s2, axis=1)
        contrib = np.prod(w[:, :kp], axis=1) * keep
        sums += np.bincount(idx, weights=contrib, minlength=n_dir)
        done += take

    # the acceptance fraction restores full-measure z; it cancels in ratio
    z_in = w_sum / (total * (kp + 1))
    den = den_sum / total
    if den <= 0.0 or z_in <= 0.0:
        raise RuntimeError("proposal weights vanished")
    ratio = (sums / per) * z_in / den
    return np.maximum(ratio, 0.0), z_in * (n_acc / n_prop)


def check_grad_k1_identity(pdf: SmoothPdf, field: OccupationField, r1,
                           samples: int = 10**6, seed: int = 0,
                           variant: str = "B", detail: bool = False):
    """Grid gradient of k1 against the contact-sphere integral.

    The gradient of the occupation integral moves the exclusion step
    of one integrated point onto the contact sphere; the integrand is
    the renormalized spatial density times the cavity-normalized pair
    survival ratio.
    """
    domain = field.domain
    n = int(round(pdf.n_target))
    sigma = domain.sigma
    r1 = np.asarray(r1, dtype=np.float64)

    dirs, wq = _sphere_quad(_pick_dirs(samples))
    r2 = r1[None, :] + sigma * dirs

    ratio, z = _direction_ratio(pdf, field, r1, r2, samples, "gradk1", seed)
    if z is None:
        z = _marginal_z(pdf, field, seed)
    big_z = n * z

    n_val, _ = pdf.marginal(r2)
    dens = n_val / (np.clip(field.k1_at(r2), 1e-12, None) * big_z)
    theta = boundary_theta(domain, r2)

    # n12 points from r2 toward r1: -u on the sphere r2 = r1 + sigma u
    terms = (-dirs) * (wq * ratio * theta * dens)[:, None]
    rhs = (n - 1) * 4.0 * math.pi * sigma**2 * terms.sum(axis=0)
    lhs = field.gradient_at(r1)

    scale = max(float(np.linalg.norm(rhs)),
                (n - 1) * 4.0 * math.pi * sigma**2 * float(dens.mean()) * 1e-2)
    disc = float(np.linalg.norm(lhs - rhs)) / scale
    if detail:
        return IdentityReport("grad-k1", r1.tolist(), lhs.tolist(),
                              rhs.tolist(), disc, samples)
    return disc


def check_streaming_identity(pdf: SmoothPdf, field: OccupationField, r1, v1,
                             dk1_dt: float = 0.0, samples: int = 10**6,
                             seed: int = 0, variant: str = "B",
                             detail: bool = False):
    """Convective derivative of k1 against the contact flux integral.

    The velocity integral folds into the local first moment of the
    estimator, so the flux side weighs the contact sphere with the
    relative mean velocity projected on the outward normal.
    """
    domain = field.domain
    n = int(round(pdf.n_target))
    sigma = domain.sigma
    r1 = np.asarray(r1, dtype=np.float64)
    v1 = np.asarray(v1, dtype=np.float64)

    dirs, wq = _sphere_quad(_pick_dirs(samples))
    r2 = r1[None, :] + sigma * dirs

    ratio, z = _direction_ratio(pdf, field, r1, r2, samples, "streamk1", seed)
    if z is None:
        z = _marginal_z(pdf, field, seed)
    big_z = n * z

    n_val, vbar = pdf.velocity_moment(r2)
    dens = n_val / (np.clip(field.k1_at(r2), 1e-12, None) * big_z)
    theta = boundary_theta(domain, r2)

    # v21 . n21 with n21 = (r2 - r1)/sigma = +u
    v_rel = np.sum((vbar - v1[None, :]) * dirs, axis=1)
    rhs = (n - 1) * 4.0 * math.pi * sigma**2 \
        * float((wq * v_rel * ratio * theta * dens).sum())
    lhs = float(dk1_dt) + float(v1 @ field.gradient_at(r1))

    v_scale = float(np.mean(np.linalg.norm(vbar, axis=1))) \
        + float(np.linalg.norm(v1)) + 1e-12
    scale = max(abs(rhs),
                (n - 1) * 4.0 * math.pi * sigma**2 * float(dens.mean())
                * v_scale * 1e-2)
    disc = abs(lhs - rhs) / scale
    if detail:
        return IdentityReport("streaming-k1", r1.tolist(), [lhs], [rhs],
                              disc, samples)
    return disc


def check_laplacian_identity(pdf: SmoothPdf, field: OccupationField, r1,
                             samples: int = 10**6, seed: int = 0,
                             variant: str = "B", detail: bool = False):
    """Grid Laplacian of k1 against the contact integral of the density slope.

    The flux form of the second derivative keeps the normal derivative
    on the renormalized density; contributions from the spatial
    variation of the pair ratio itself are of relative order N sigma^3
    times the density and sit inside the stated tolerance band.
    """
    domain = field.domain
    n = int(round(pdf.n_target))
    sigma = domain.sigma
    r1 = np.asarray(r1, dtype=np.float64)

    dirs, wq = _sphere_quad(_pick_dirs(samples))
    r2 = r1[None, :] + sigma * dirs

    ratio, z = _direction_ratio(pdf, field, r1, r2, samples, "lapk1", seed)
    if z is None:
        z = _marginal_z(pdf, field, seed)
    big_z = n * z

    n_val, n_grad = pdf.marginal(r2)
    k1r2 = np.clip(field.k1_at(r2), 1e-12, None)
    k1_grad = field.gradient_many(r2)
    dens_grad = (n_grad * k1r2[:, None] - n_val[:, None] * k1_grad) \
        / (k1r2**2)[:, None] / big_z
    theta = boundary_theta(domain, r2)

    # n21 = +u against the slope of the renormalized density
    terms = np.sum(dens_grad * dirs, axis=1) * ratio * theta
    rhs = -(n - 1) * 4.0 * math.pi * sigma**2 * float((wq * terms).sum())
    lhs = field.laplacian_at(r1)

    grad_scale = float(np.mean(np.linalg.norm(dens_grad, axis=1))) + 1e-12
    scale = max(abs(lhs), abs(rhs),
                (n - 1) * 4.0 * math.pi * sigma**2 * grad_scale * 1e-2)
    disc = abs(lhs - rhs) / scale
    if detail:
        return IdentityReport("laplacian-k1", r1.tolist(), [lhs], [rhs],
                              disc, samples)
    return disc


def evaluate_grad_k2(pdf: SmoothPdf, field: OccupationField, r1, r2,
                     samples: int = 10**5, seed: int = 0,
                     variant: str = "B"):
    """Contact-sphere route for the gradient of k2 with respect to r1.

    The chain variant is load-bearing here: the causal (factorized)
    chain carries the factor theta(|r1 - r2| + |r3 - r1| - 2 sigma),
    which on the contact sphere |r3 - r1| = sigma reduces to
    theta(|r1 - r2| - sigma) and vanishes identically when the fixed
    pair is itself at contact. The plain chain has no such factor and
    keeps a finite gradient there. Returns (vector, error).
    """
    domain = field.domain
    n = int(round(pdf.n_target))
    sigma = domain.sigma
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    if n < 2:
        raise ValueError("pair coefficient needs at least two particles")
    if np.linalg.norm(r1 - r2) < sigma * (1.0 - 1e-12):
        raise ValueError("pair centers overlap: |r1 - r2| < sigma")
    if n == 2:
        return np.zeros(3), 0.0

    dirs, wq = _sphere_quad(_pick_dirs(samples))
    r3 = r1[None, :] + sigma * dirs

    n_val, _ = pdf.marginal(r3)
    theta = boundary_theta(domain, r3)

    d12 = float(np.linalg.norm(r1 - r2))
    d23 = np.linalg.norm(r3 - r2[None, :], axis=1)
    chain = strong_heaviside(d23 - sigma)
    if variant == "B":
        # contact detection robust to rounding in |r1 - r2|
        at_contact = d12 - sigma <= sigma * 1e-12
        chain = chain * (0.0 if at_contact else 1.0)
        chain = chain * strong_heaviside(d12 + d23 - 2.0 * sigma)

    pref = (n - 2) * 4.0 * math.pi * sigma**2
    n_batch = 4
    vecs = np.empty((n_batch, 3))
    for b in range(n_batch):
        ratio, z = _direction_ratio(pdf, field, r1, r3,
                                    max(1, samples // n_batch),
                                    "gradk2-b%d" % b, seed, extra_anchor=r2)
        if z is None:
            z = _marginal_z(pdf, field, seed)
        dens = n_val / (np.clip(field.k1_at(r3), 1e-12, None) * n * z)
        # n13 points from r3 toward r1: -u
        terms = (-dirs) * (wq * chain * ratio * theta * dens)[:, None]
        vecs[b] = pref * terms.sum(axis=0)
    vec = vecs.mean(axis=0)
    err = float(np.linalg.norm(vecs.std(axis=0, ddof=1))) / math.sqrt(n_batch)
    return vec, err


# ---------------------------------------------------------------------------
# Boltzmann-Grad sweep


def bg_sweep(members, make_pdf, samples: int = 50000, seed: int = 0,
             variant: str = "B") -> list:
    """k1 and k2 across a family (N_k, sigma_k) with N sigma^2 fixed.

    make_pdf(domain, n) must return a SmoothPdf normalized to n. Returns
    one dict per member with the center k1 and a contact-pair k2. A coarse
    2x2x2 grid keeps the pool tables small for the dense-N members; the
    center value interpolates all eight cells.
    """
    if len(members) < 3:
        raise ValueError("bg_sweep needs at least 3 family members")
    rows = []
    for idx, (n, sigma) in enumerate(members):
        domain = DomainSpec(lo=np.zeros(3), hi=np.ones(3), sigma=float(sigma))
        pdf = make_pdf(domain, n)
        fld = estimate_k1(pdf, domain, samples=samples, grid=(2, 2, 2),
                          seed=seed + idx, variant=variant)
        center = 0.5 * (domain.lo + domain.hi)
        k1_c = float(fld.k1_at(center[None, :])[0])
        g = fld.grid_shape[0]
        mid = (g // 2, g // 2, g // 2)
        k1_err = float(fld.stderr[mid])
        offset = np.array([sigma, 0.0, 0.0])
        pair = estimate_k2(pdf, center - 0.5 * offset, center + 0.5 * offset,
                           domain, samples=samples, field=fld,
                           seed=seed + 100 + idx, variant=variant)
        rows.append({"N": int(n), "sigma": float(sigma), "k1": k1_c,
                     "k1_err": k1_err, "k2": pair.value,
                     "k2_err": pair.stderr})
    return rows
