"""Scalar functionals of the relaxation theory and their decay gates.

The entropy functional is the phase-space moment of -ln(rho/A1) and is
estimated with the density estimate serving as its own importance
proposal, so a spatially uniform state at the reference level scores
exactly zero. The directional kinetic energy along a constant unit
vector b is (v.b)^2; half the sum over a colliding pair is the total
directional energy, and its jump across a collision reduces to a
closed form in the outgoing relative velocity and the contact normal.

The decay functional K_M weighs the directional energy with the inner
product of two spatial slopes: the gradient of the occupation field
and the gradient of the renormalized density rho-hat = rho/(N k1).
The occupation gradient carries the contact-sphere flux of the
renormalized density (the verified differential identity of the
occupation module), so this first-derivative form is the contact
representation of the flux-divergence (second-derivative) form, which
is kept as a cross-check. Because the occupation coefficient is a
survival probability, its gradient anti-aligns with the density slope;
the overall sign is fixed so that K_M is non-negative, vanishes only
on gradient-free (kinetic equilibrium) states, and decays in time.
I_M = K_M / K_Mo with K_Mo = max(1, K_M at the initial state) is then
a unit-interval decay index.

The collision production rate W_M integrates the surviving jump of the
total directional energy over contact pairs: a deterministic
solid-angle rule over the incoming hemisphere combined with MC over
positions and a Maxwellian velocity reference. Under the causal
collision rule the density-gradient arguments are the outgoing
velocities of each sampled incoming pair and the rate is non-positive;
the anti-causal rule exchanges the collision branches, which evaluates
the gradients at the sampled (incoming) velocities and flips the sign.

Statistical gates use three standard errors from 32-batch means; the
monotone-decay gate fits a non-increasing isotonic sequence to the
I_M series and compares the residual with the pooled error.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from .geometry import boundary_theta
from .ensemble import (MaxwellianParams, SmoothPdf, distance_to_maxwellian,
                       estimate_pdf, fit_maxwellian, scale_length)
from .occupation import (OccupationField, PairOccupation, _sphere_quad,
                         estimate_k1, estimate_k2)
from .rng import stream


class DegenerateStart(UserWarning):
    """Initial decay functional vanishes; unit normalization is used."""


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class DirectionSpec:
    """Constant unit vector selecting the directional energy component."""

    b: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if v.shape != (3,):
            raise ValueError("b must be a 3-vector")
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-9:
            raise ValueError("b must be a unit vector")
        object.__setattr__(self, "b", v)


def axis_directions() -> list:
    """The three coordinate axes as direction specs."""
    eye = np.eye(3)
    return [DirectionSpec(eye[j]) for j in range(3)]


@dataclass
class FunctionalSample:
    """One time slice of the functional chain.

    K_M and I_M are reported clamped to their theoretical ranges; the
    raw MC values ride along for gate evaluation. b is the zero vector
    when the axis-averaged (isotropic) moment was used.
    """

    t: float
    S: float
    S_err: float
    K_M: float
    K_M_err: float
    K_Mo: float
    I_M: float
    W_M: float
    W_M_err: float
    L_rho: float
    dist_maxwellian: float
    dist_err: float
    b: tuple
    cbc: str
    K_M_raw: float = None
    I_M_raw: float = None
    degenerate: bool = False

    def __post_init__(self):
        if self.K_M_raw is None:
            self.K_M_raw = self.K_M
        if self.I_M_raw is None:
            self.I_M_raw = self.I_M
        errs = (self.S_err, self.K_M_err, self.W_M_err, self.dist_err)
        if any(e < 0.0 for e in errs):
            raise ValueError("standard errors must be non-negative")
        if self.K_M < 0.0 or self.K_Mo < 1.0:
            raise ValueError("K_M must be >= 0 and K_Mo >= 1")
        if not 0.0 <= self.I_M <= 1.0:
            raise ValueError("I_M must lie in [0, 1]")
        if not self.degenerate:
            ratio = min(1.0, self.K_M / self.K_Mo)
            if abs(self.I_M - ratio) > 1e-9:
                raise ValueError("I_M must equal K_M/K_Mo clamped to [0, 1]")
        if self.cbc == "causal" \
                and self.W_M > 3.0 * self.W_M_err + 1e-12:
            raise RuntimeError(
                "causal production rate positive beyond 3 standard errors")

    def as_dict(self) -> dict:
        return {
            "t": self.t, "S": self.S, "S_err": self.S_err,
            "K_M": self.K_M, "K_M_err": self.K_M_err, "K_Mo": self.K_Mo,
            "I_M": self.I_M, "W_M": self.W_M, "W_M_err": self.W_M_err,
            "L_rho": self.L_rho, "dist_maxwellian": self.dist_maxwellian,
            "dist_err": self.dist_err,
            "b_x": self.b[0], "b_y": self.b[1], "b_z": self.b[2],
            "cbc": self.cbc, "K_M_raw": self.K_M_raw,
            "I_M_raw": self.I_M_raw, "degenerate": self.degenerate,
        }


@dataclass
class KMEstimate:
    """Decay functional estimate with optional cross-form check."""

    value: float
    stderr: float
    samples: int
    cross_value: float = None
    cross_stderr: float = None
    cross_discrepancy: float = None


# ---------------------------------------------------------------------------
# pointwise moments


def directional_energy(v, b: DirectionSpec):
    """Squared velocity component along b."""
    v = np.asarray(v, dtype=np.float64)
    p = v @ b.b
    out = p * p
    return float(out) if np.ndim(out) == 0 else out


def total_directional_energy(v1, v2, b: DirectionSpec):
    """Half the summed directional energies of a pair; symmetric."""
    return 0.5 * (directional_energy(v1, b) + directional_energy(v2, b))


def delta_M(v1_out, v2_out, n12, b: DirectionSpec):
    """Collision jump of the total directional energy.

    Arguments are the outgoing pair velocities and the contact normal
    from the second center toward the first (n12 . v12_out > 0 for a
    completed collision). Vanishes when b is orthogonal or parallel to
    the normal.
    """
    v12 = np.asarray(v1_out, dtype=np.float64) \
        - np.asarray(v2_out, dtype=np.float64)
    n = np.asarray(n12, dtype=np.float64)
    bn = n @ b.b
    g = np.sum(v12 * n, axis=-1)
    vb = v12 @ b.b
    out = bn * np.abs(g) * vb - bn * bn * g * g
    return float(out) if np.ndim(out) == 0 else out


def _moment(v: np.ndarray, b) -> np.ndarray:
    # b None selects the axis average, one third of the speed squared
    if b is None:
        return np.sum(v * v, axis=1) / 3.0
    p = v @ b.b
    return p * p


def _batch_mean(terms: np.ndarray, n_batches: int = 32):
    est = float(terms.mean())
    n_batches = max(2, min(n_batches, terms.size))
    usable = (terms.size // n_batches) * n_batches
    b = terms[:usable].reshape(n_batches, -1).mean(axis=1)
    return est, float(b.std(ddof=1) / math.sqrt(n_batches))


# ---------------------------------------------------------------------------
# entropy


def bs_entropy(pdf, A1: float, samples: int = 200000, seed: int = 0,
               n_batches: int = 32):
    """MC estimate of -integral rho ln(rho/A1) over the phase space.

    The density estimate is its own importance proposal, so the
    integral reduces to a sample mean of the log ratio. Returns
    (value, stderr). A vanishing or non-finite density on its own
    support is a fault, not a value.
    """
    if A1 <= 0.0:
        raise ValueError("A1 must be positive")
    rng = stream(seed, "entropy")
    r, v = pdf.sample_phase(rng, samples)
    val = np.asarray(pdf.evaluate(r, v, derivs=False), dtype=np.float64)
    if not np.all(np.isfinite(val)) or np.any(val <= 0.0):
        raise RuntimeError("entropy integrand underflow: density vanished "
                           "on its own support")
    terms = -float(pdf.n_target) * np.log(val / A1)
    return _batch_mean(terms, n_batches)


# ---------------------------------------------------------------------------
# decay functional


def _field_replicas(occ: OccupationField, seed: int, count: int) -> list:
    """Parametric bootstrap fields: cell values jittered by cell stderr."""
    if not np.any(np.asarray(occ.stderr) > 0.0):
        return []
    rng = stream(seed, "km", "fieldboot")
    reps = []
    for _ in range(count):
        pert = occ.k1 + occ.stderr * rng.normal(size=occ.k1.shape)
        reps.append(OccupationField(occ.domain, occ.grid_shape,
                                    np.clip(pert, 1e-9, None), occ.stderr))
    return reps


def compute_KM(pdf, occ: OccupationField, b: DirectionSpec = None,
               samples: int = 200000, seed: int = 0,
               cross_check: bool = False, n_batches: int = 32,
               field_replicas: int = 12) -> KMEstimate:
    """First-derivative estimate of the decay functional.

    Draws phase points from the density estimate and averages the
    directional energy times the inner product of the occupation-field
    gradient with the log-slope of the renormalized density
    rho-hat = rho/(N k1). The sign makes the value non-negative for
    survival-normalized occupation (field gradient against density
    slope); a value negative beyond three standard errors violates the
    non-negativity property and raises. The reported stderr combines
    batch-means quadrature error with the sensitivity to the field's
    own cell noise (parametric bootstrap over cell stderr), since a
    frozen noise tilt of the field biases the inner product in a way
    probe statistics alone cannot see. With cross_check=True the
    flux-divergence form (density Laplacian against the field value
    plus the full product-rule remainder) is evaluated on the same
    draws and the relative gap between the forms is reported.
    """
    rng = stream(seed, "km")
    r, v = pdf.sample_phase(rng, samples)
    theta = boundary_theta(pdf.domain, r)
    val, grad, lap = pdf.evaluate(r, v, derivs=True)
    ok = val > 0.0
    safe = np.where(ok, val, 1.0)
    m_v = _moment(v, b)

    def grad_terms(fld):
        k1 = np.clip(fld.k1_at(r), 1e-12, None)
        gk1 = fld.gradient_many(r)
        score = grad / safe[:, None] - gk1 / k1[:, None]
        t = -theta * m_v * np.sum(gk1 * score, axis=1) / k1
        t[~ok] = 0.0
        return t, k1, gk1

    terms, k1, gk1 = grad_terms(occ)
    est, err = _batch_mean(terms, n_batches)
    reps = _field_replicas(occ, seed, field_replicas)
    if reps:
        means = [float(grad_terms(f)[0].mean()) for f in reps]
        err = math.hypot(err, float(np.std(means, ddof=1)))
    if est < -3.0 * err - 1e-12:
        raise RuntimeError(
            "decay functional negative beyond 3 standard errors")
    out = KMEstimate(value=est, stderr=err, samples=samples)

    if cross_check:
        def lap_terms(fld, k1v, gk1v):
            lk1 = fld.laplacian_many(r)
            t = theta * m_v * (
                lap / safe
                - 2.0 * np.sum(grad * gk1v, axis=1) / (safe * k1v)
                - lk1 / k1v
                + 2.0 * np.sum(gk1v * gk1v, axis=1) / (k1v * k1v))
            t[~ok] = 0.0
            return t

        cterms = lap_terms(occ, k1, gk1)
        cv, ce = _batch_mean(cterms, n_batches)
        if reps:
            cmeans = []
            for f in reps:
                _, k1b, gk1b = grad_terms(f)
                cmeans.append(float(lap_terms(f, k1b, gk1b).mean()))
            ce = math.hypot(ce, float(np.std(cmeans, ddof=1)))
        out.cross_value = cv
        out.cross_stderr = ce
        scale = max(abs(est), abs(cv), 3.0 * (err + ce), 1e-12)
        out.cross_discrepancy = abs(est - cv) / scale
    return out


def compute_KMo(k_m_initial: float) -> float:
    """Normalization constant: the initial functional floored at one."""
    if k_m_initial < 0.0:
        raise ValueError("initial functional must be non-negative")
    if k_m_initial == 0.0:
        warnings.warn("initial decay functional vanishes; normalization "
                      "falls back to 1", DegenerateStart)
        return 1.0
    return max(1.0, float(k_m_initial))


def compute_IM(k_m: float, k_mo: float, stderr: float = 0.0):
    """Decay index K_M/K_Mo clamped to the unit interval.

    Returns (clamped, raw). Clamping absorbs MC noise of up to three
    standard errors past either end; anything beyond that violates the
    range property and raises.
    """
    if k_mo < 1.0:
        raise ValueError("normalization constant must be at least 1")
    if stderr < 0.0:
        raise ValueError("stderr must be non-negative")
    raw = k_m / k_mo
    slack = 3.0 * stderr / k_mo + 1e-12
    if raw < -slack or raw > 1.0 + slack:
        raise RuntimeError(
            "decay index outside [0, 1] beyond 3 standard errors")
    return min(1.0, max(0.0, raw)), raw


# ---------------------------------------------------------------------------
# collision production rate


def _gauss_weight(v: np.ndarray, p: MaxwellianParams) -> np.ndarray:
    d = v - p.V_o[None, :]
    w2 = np.sum(d * d, axis=1)
    return (2.0 * math.pi * p.T_o) ** (-1.5) * np.exp(-w2 / (2.0 * p.T_o))


def _rhohat_grad(pdf, occ: OccupationField, r: np.ndarray, v: np.ndarray):
    """Spatial gradient of rho-hat = rho/(N k1) at phase probes."""
    val, grad, _ = pdf.evaluate(r, v, derivs=True)
    k1 = np.clip(occ.k1_at(r), 1e-12, None)
    gk1 = occ.gradient_many(r)
    num = grad - val[:, None] * gk1 / k1[:, None]
    return num / (float(pdf.n_target) * k1[:, None])


def compute_WM(pdf, occ: OccupationField, b: DirectionSpec = None,
               samples: int = 1500, cbc: str = "causal",
               pair: PairOccupation = None, seed: int = 0,
               nodes: int = 162, n_batches: int = 32):
    """Collision production rate of the decay functional.

    MC over contact positions and a Maxwellian velocity reference,
    with a deterministic solid-angle rule restricted to the incoming
    hemisphere. The integrand carries the cube of the normal relative
    speed, the squared normal projection of b, the pair coefficient,
    and the inner product of renormalized density gradients across the
    contact separation. Causal evaluation takes the gradients at the
    outgoing velocities of the sampled incoming pair and the rate is
    non-positive up to noise; the anti-causal rule exchanges the
    collision branches, evaluating the gradients at the sampled
    velocities with the opposite sign. The pair coefficient enters at
    its contact level (position modulation is second order in the
    packing fraction); pass a PairOccupation to pin it, else it is
    estimated at a centered contact pair. Returns (value, stderr).
    """
    if cbc not in ("causal", "anticausal"):
        raise ValueError("cbc must be 'causal' or 'anticausal'")
    dom = pdf.domain
    n_part = int(round(pdf.n_target))
    sigma = dom.sigma

    if pair is not None:
        k2f = float(pair.value)
    elif n_part == 2:
        k2f = 1.0
    else:
        mid = 0.5 * (dom.lo + dom.hi)
        off = np.array([0.5 * sigma, 0.0, 0.0])
        p = estimate_k2(pdf, mid - off, mid + off, samples=max(20000, samples),
                        field=occ, seed=seed)
        k2f = float(p.value)

    dirs, wq = _sphere_quad(nodes)
    ref = fit_maxwellian(pdf)
    rng = stream(seed, "wm", cbc)
    alo, ahi = dom.accessible_lo(), dom.accessible_hi()
    r1 = rng.uniform(alo, ahi, size=(samples, 3))
    sig_v = math.sqrt(ref.T_o)
    v1 = ref.V_o[None, :] + sig_v * rng.normal(size=(samples, 3))
    v2 = ref.V_o[None, :] + sig_v * rng.normal(size=(samples, 3))
    inv_q = 1.0 / (_gauss_weight(v1, ref) * _gauss_weight(v2, ref))

    # node geometry: n12 points from the partner center toward r1
    g = (v1 - v2) @ dirs.T
    incoming = g < 0.0
    r2 = r1[:, None, :] - sigma * dirs[None, :, :]
    theta2 = boundary_theta(dom, r2.reshape(-1, 3)).reshape(samples, -1)
    if b is None:
        bn2 = np.full(dirs.shape[0], 1.0 / 3.0)
    else:
        bn = dirs @ b.b
        bn2 = bn * bn
    factor = wq[None, :] * incoming * np.abs(g) ** 3 * bn2[None, :] * theta2

    keep = factor != 0.0
    rows, cols = np.nonzero(keep)
    dot = np.zeros_like(factor)
    if rows.size:
        nsel = dirs[cols]
        gsel = g[rows, cols][:, None]
        if cbc == "causal":
            va = v1[rows] - nsel * gsel
            vb = v2[rows] + nsel * gsel
        else:
            va = v1[rows]
            vb = v2[rows]
        d1 = _rhohat_grad(pdf, occ, r1[rows], va)
        d2 = _rhohat_grad(pdf, occ, r2[rows, cols], vb)
        dot[rows, cols] = np.sum(d1 * d2, axis=1)

    sign = -1.0 if cbc == "causal" else 1.0
    pref = sign * (n_part - 1) * sigma ** 2 * 4.0 * math.pi \
        * dom.accessible_volume() * k2f
    terms = pref * inv_q * np.sum(factor * dot, axis=1)
    return _batch_mean(terms, n_batches)


# ---------------------------------------------------------------------------
# time series


@dataclass
class FunctionalConfig:
    """Budgets and references for the functional time series."""

    b: DirectionSpec = dc_field(
        default_factory=lambda: DirectionSpec((1.0, 0.0, 0.0)))
    cbc: str = "causal"
    a1: float = 1.0
    grid: tuple = (4, 4, 4)
    k1_samples: int = 60000
    km_samples: int = 120000
    wm_samples: int = 1500
    entropy_samples: int = 120000
    pair_samples: int = 40000
    cross_check: bool = False
    seed: int = 0
    ref: MaxwellianParams = None

    def as_dict(self) -> dict:
        d = {"cbc": self.cbc, "a1": self.a1, "grid": list(self.grid),
             "k1_samples": self.k1_samples, "km_samples": self.km_samples,
             "wm_samples": self.wm_samples,
             "entropy_samples": self.entropy_samples,
             "pair_samples": self.pair_samples,
             "cross_check": self.cross_check, "seed": self.seed,
             "b": None if self.b is None else self.b.b.tolist()}
        if self.ref is not None:
            d["ref"] = {"n_o": self.ref.n_o, "T_o": self.ref.T_o,
                        "V_o": self.ref.V_o.tolist()}
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _b_tuple(b) -> tuple:
    # zero vector marks the axis-averaged moment
    if b is None:
        return (0.0, 0.0, 0.0)
    return tuple(float(x) for x in b.b)


def evaluate_state(pdf, field: OccupationField, config: FunctionalConfig,
                   t: float, k_mo: float = None, pair: PairOccupation = None,
                   seed: int = 0, degenerate: bool = False) -> FunctionalSample:
    """All functionals of one estimated state as a time-series row.

    With k_mo None the row normalizes against itself (first row of a
    series); the caller freezes the returned K_Mo for later rows.
    """
    cfg = config
    s_val, s_err = bs_entropy(pdf, cfg.a1, cfg.entropy_samples, seed=seed)
    km = compute_KM(pdf, field, cfg.b, cfg.km_samples, seed=seed,
                    cross_check=cfg.cross_check)
    k_clamped = max(0.0, km.value)
    if k_mo is None:
        degenerate = k_clamped <= 3.0 * km.stderr
        k_mo = compute_KMo(0.0 if degenerate else k_clamped)
    i_m, i_raw = compute_IM(k_clamped, k_mo, km.stderr)
    w_val, w_err = compute_WM(pdf, field, cfg.b, cfg.wm_samples,
                              cbc=cfg.cbc, pair=pair, seed=seed)
    ref = cfg.ref if cfg.ref is not None else fit_maxwellian(pdf)
    dist, dist_err = distance_to_maxwellian(pdf, ref, seed=seed)
    return FunctionalSample(
        t=float(t), S=s_val, S_err=s_err,
        K_M=k_clamped, K_M_err=km.stderr, K_Mo=k_mo,
        I_M=i_m, W_M=w_val, W_M_err=w_err,
        L_rho=scale_length(pdf, seed=seed),
        dist_maxwellian=dist, dist_err=dist_err,
        b=_b_tuple(cfg.b), cbc=cfg.cbc,
        K_M_raw=km.value, I_M_raw=i_raw, degenerate=degenerate)


def functional_timeseries(ensemble, times, b=None,
                          config: FunctionalConfig = None) -> list:
    """Advance the ensemble through the given times and score each state.

    The normalization constant, the Maxwellian reference, and (at more
    than two bodies) the contact pair coefficient are frozen from the
    first time; b overrides the configured direction when given.
    Returns the rows in time order.
    """
    cfg = config if config is not None else FunctionalConfig()
    if b is not None:
        cfg.b = b
    times = sorted(float(t) for t in times)
    rows = []
    k_mo = None
    pair = None
    degenerate = False
    n_part = ensemble.n
    for i, t in enumerate(times):
        seed_i = cfg.seed + 7919 * i
        ensemble.advance_to(t)
        pdf = estimate_pdf(ensemble, t)
        field = estimate_k1(pdf, samples=cfg.k1_samples, grid=cfg.grid,
                            seed=seed_i)
        if cfg.ref is None:
            cfg.ref = fit_maxwellian(pdf)
        if pair is None and n_part > 2:
            mid = 0.5 * (pdf.domain.lo + pdf.domain.hi)
            off = np.array([0.5 * pdf.domain.sigma, 0.0, 0.0])
            pair = estimate_k2(pdf, mid - off, mid + off,
                               samples=cfg.pair_samples, field=field,
                               seed=seed_i)
        row = evaluate_state(pdf, field, cfg, t, k_mo=k_mo, pair=pair,
                             seed=seed_i, degenerate=degenerate)
        k_mo = row.K_Mo
        degenerate = row.degenerate
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# gates and serialization


def _isotonic_decreasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit, non-increasing, uniform weights."""
    vals = list(-np.asarray(y, dtype=np.float64))
    counts = [1] * len(vals)
    out_v, out_c = [], []
    for v, c in zip(vals, counts):
        out_v.append(v)
        out_c.append(c)
        while len(out_v) > 1 and out_v[-2] > out_v[-1]:
            v2, c2 = out_v.pop(), out_c.pop()
            v1, c1 = out_v.pop(), out_c.pop()
            out_v.append((v1 * c1 + v2 * c2) / (c1 + c2))
            out_c.append(c1 + c2)
    fit = np.concatenate([np.full(c, v) for v, c in zip(out_v, out_c)])
    return -fit


def evaluate_gates(rows: list) -> dict:
    """Numeric decay gates over a time series of functional rows.

    Monotonicity compares the worst isotonic residual of the raw decay
    index against twice the pooled standard error; sign gates allow
    three standard errors. End-state ratios are reported for the decay
    criteria along with their pass flags at the standard thresholds.
    """
    if not rows:
        raise ValueError("no rows to evaluate")
    kraw = np.array([r.K_M_raw for r in rows])
    kerr = np.array([r.K_M_err for r in rows])
    iraw = np.array([r.I_M_raw for r in rows])
    ierr = kerr / np.array([r.K_Mo for r in rows])
    wval = np.array([r.W_M for r in rows])
    werr = np.array([r.W_M_err for r in rows])
    sval = np.array([r.S for r in rows])
    dist = np.array([r.dist_maxwellian for r in rows])

    fit = _isotonic_decreasing(iraw)
    resid = float(np.max(np.abs(fit - iraw)))
    pooled = float(np.sqrt(np.mean(ierr ** 2)))
    causal = all(r.cbc == "causal" for r in rows)
    gates = {
        "thm1_nonneg": bool(np.all(kraw >= -3.0 * kerr - 1e-12)),
        "im_in_range": bool(np.all((iraw >= -3.0 * ierr - 1e-12)
                                   & (iraw <= 1.0 + 3.0 * ierr + 1e-12))),
        "thm2_sign": bool(np.all(wval <= 3.0 * werr + 1e-12)) if causal
        else bool(np.all(wval >= -3.0 * werr - 1e-12)),
        "thm2_monotone": bool(resid <= 2.0 * pooled + 1e-12),
        "isotonic_residual": resid,
        "pooled_im_err": pooled,
        "entropy_drift": float(np.max(np.abs(sval - sval[0]))),
        "dist_ratio": float(dist[-1] / dist[0]) if dist[0] > 0.0 else 0.0,
        "im_ratio": float(iraw[-1] / iraw[0]) if iraw[0] > 0.0 else 0.0,
        "degenerate_start": bool(rows[0].degenerate),
    }
    gates["thm3_dist"] = gates["dist_ratio"] <= 0.2
    gates["thm3_im"] = gates["im_ratio"] <= 0.1
    return gates


CSV_COLUMNS = ("t", "S", "S_err", "K_M", "K_M_err", "K_Mo", "I_M",
               "W_M", "W_M_err", "L_rho", "dist_maxwellian", "dist_err",
               "b_x", "b_y", "b_z", "cbc")


def write_timeseries(rows: list, path: str) -> None:
    """Time-series CSV at full round-trip precision."""
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in rows:
            d = r.as_dict()
            cells = ["%.17g" % d[c] if c != "cbc" else d[c]
                     for c in CSV_COLUMNS]
            fh.write(",".join(cells) + "\n")


def run_summary(rows: list, config: FunctionalConfig, seeds=None,
                extra: dict = None) -> dict:
    """JSON-ready run summary: config digest, seeds, gate outcomes."""
    payload = {
        "config": config.as_dict(),
        "config_digest": config.digest(),
        "seeds": list(seeds) if seeds is not None else [config.seed],
        "gates": evaluate_gates(rows),
        "rows": len(rows),
        "t_first": rows[0].t,
        "t_last": rows[-1].t,
    }
    if extra:
        payload.update(extra)
    return payload
