"""Spherical-Gaussian shading: lobe algebra, a closed-form renderer for the
non-emitting rendering equation, and a Monte Carlo reference integrator.

The appearance model is a mixture of SG lobes for incident light, a
Lambertian diffuse term (albedo / pi) and a fixed-roughness simplified
Disney specular term whose GGX-style NDF is expressed as an SG in the
half-vector domain and warped to the incident domain about the reflection
direction. Radiance integrals are evaluated per lobe with a clipped
(hemisphere-restricted) SG integral: the clamped cosine enters as the
difference of a broad SG and a constant, which avoids the large
below-horizon leakage of a plain full-sphere product integral.

All fitted constants below are produced by ``monorelight.sgfit`` and frozen
here; the fit script is part of the package. The closed forms accept plain
arrays or tape tensors (illumination / albedo decoders differentiate
through them); surface geometry and view directions are always numeric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad

TWO_PI = 2.0 * math.pi

# single-SG fit of the clamped cosine, least squares on the supported
# hemisphere (see sgfit.fit_clamped_cosine_lobe)
COS_SG_SHARPNESS = 1.860211694930
COS_SG_AMPLITUDE = 1.119302660719

# clamped cosine as scale * SG(n, sharpness) - offset, valid on the upper
# hemisphere where the clipped integrals evaluate it
# (see sgfit.fit_difference_cosine)
DIFF_COS_SHARPNESS = 0.1
DIFF_COS_SCALE = 10.508331944775
DIFF_COS_OFFSET = 9.500000000000

# steepness of the hemispherical SG integral interpolant as a function of
# lobe sharpness (see sgfit.fit_hemisphere_steepness)
HEMI_STEEPNESS_COEFFS = (1.698801, 9.902279, 5.437745, 12.491284)

DEFAULT_ROUGHNESS = 0.4
DEFAULT_F0 = 0.04


class ShadingError(RuntimeError):
    pass


class SGProductError(ShadingError):
    """Anti-podal lobes of matching sharpness have no SG product form."""


@dataclass
class SGLobe:
    """One spherical-Gaussian lobe mu * exp(lam * (dot(w, xi) - 1))."""

    xi: np.ndarray
    lam: float
    mu: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if abs(np.linalg.norm(self.xi) - 1.0) > 1e-6:
            raise ShadingError("lobe direction must be unit length")
        if not self.lam > 0:
            raise ShadingError("lobe sharpness must be positive")
        if np.any(self.mu < 0):
            raise ShadingError("lobe amplitude must be non-negative")


@dataclass
class EnvironmentMap:
    lobes: list

    def __post_init__(self):
        if len(self.lobes) < 1:
            raise ShadingError("environment needs at least one lobe")

    def stacked(self):
        xi = np.stack([l.xi for l in self.lobes])
        lam = np.array([[l.lam] for l in self.lobes])
        mu = np.stack([l.mu for l in self.lobes])
        return xi, lam, mu

    @classmethod
    def from_stacked(cls, xi, lam, mu):
        lam = np.asarray(lam, dtype=np.float64).reshape(-1)
        return cls([SGLobe(x, float(l), m) for x, l, m in zip(np.asarray(xi), lam, np.asarray(mu))])

    def scaled(self, factor: float) -> "EnvironmentMap":
        return EnvironmentMap([SGLobe(l.xi, l.lam, l.mu * factor) for l in self.lobes])

    def to_json_obj(self):
        return {"lobes": [{"xi": l.xi.tolist(), "lambda": l.lam, "mu": l.mu.tolist()}
                          for l in self.lobes]}

    @classmethod
    def from_json_obj(cls, obj):
        return cls([SGLobe(np.array(e["xi"]), float(e["lambda"]), np.array(e["mu"]))
                    for e in obj["lobes"]])


@dataclass
class BRDFConfig:
    roughness: float = DEFAULT_ROUGHNESS
    k_s: float = 1.0
    k_r: float = 0.0
    f0: float = DEFAULT_F0

    def __post_init__(self):
        if not 0 < self.roughness <= 1:
            raise ShadingError("roughness must be in (0, 1]")
        if not 0 <= self.k_s <= 1 or not 0 <= self.k_r <= 1:
            raise ShadingError("k_s and k_r must be in [0, 1]")


@dataclass
class ShadePoint:
    x: np.ndarray
    n: np.ndarray
    omega_o: np.ndarray
    a: np.ndarray
    s: float
    a_base: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.n = np.asarray(self.n, dtype=np.float64)
        self.omega_o = np.asarray(self.omega_o, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        if np.any(self.a < 0) or np.any(self.a > 1):
            raise ShadingError("diffuse albedo must be in [0,1]^3")
        if not 0 <= self.s <= 1:
            raise ShadingError("specular albedo must be in [0,1]")

    @property
    def backfacing(self) -> bool:
        return float(self.omega_o @ self.n) <= 0.0


# ---------------------------------------------------------------------------
# lobe algebra (spec surface; numeric)
# ---------------------------------------------------------------------------


def sg_eval(lobe: SGLobe, w) -> np.ndarray:
    """Evaluate the lobe at unit direction(s) w; (3,) or (N,3) -> (...,3)."""
    w = np.asarray(w, dtype=np.float64)
    decay = np.exp(lobe.lam * (w @ lobe.xi - 1.0))
    return lobe.mu * (decay[..., None] if w.ndim > 1 else decay)


def sg_integral(lobe: SGLobe) -> np.ndarray:
    """Exact full-sphere integral 2 pi mu (1 - e^{-2 lam}) / lam."""
    if not lobe.lam > 0:
        raise ShadingError("sharpness must be positive")
    return TWO_PI * lobe.mu * (-np.expm1(-2.0 * lobe.lam)) / lobe.lam


def sg_product(l1: SGLobe, l2: SGLobe) -> SGLobe:
    """Pointwise product of two lobes, itself an SG lobe."""
    v = l1.lam * l1.xi + l2.lam * l2.xi
    lam = float(np.linalg.norm(v))
    if lam < 1e-9:
        raise SGProductError(
            "anti-podal lobes of equal sharpness collapse to a constant; "
            "integrate the pair numerically (sg_product_integral)"
        )
    xi = v / lam
    mu = l1.mu * l2.mu * math.exp(lam - l1.lam - l2.lam)
    return SGLobe(xi, lam, mu)


def sg_product_integral(l1: SGLobe, l2: SGLobe) -> np.ndarray:
    """Full-sphere integral of the pointwise product of two lobes.

    Uses the closed form through sg_product; for the anti-podal degenerate
    pair it falls back to numerical quadrature of the product.
    """
    try:
        return sg_integral(sg_product(l1, l2))
    except SGProductError:
        return _quadrature_pair_integral(l1, l2)


def _quadrature_pair_integral(l1: SGLobe, l2: SGLobe, order: int = 64) -> np.ndarray:
    # degenerate case is xi2 = -xi1; the product depends on direction only
    # through t = dot(w, xi1), so one Gauss-Legendre sweep suffices
    nodes, weights = np.polynomial.legendre.leggauss(order)
    vals = np.exp(l1.lam * (nodes - 1.0) + l2.lam * (-nodes - 1.0))
    integral_scalar = TWO_PI * float(np.sum(weights * vals))
    return l1.mu * l2.mu * integral_scalar


def clamped_cosine_sg(n) -> SGLobe:
    """Single-lobe least-squares SG approximation of max(dot(w, n), 0)."""
    n = np.asarray(n, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ShadingError("normal must be unit length")
    return SGLobe(n, COS_SG_SHARPNESS, np.full(3, COS_SG_AMPLITUDE))


def fibonacci_directions(count: int) -> np.ndarray:
    """Deterministic near-uniform unit directions."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(count)
    y = 1.0 - 2.0 * i / max(count - 1, 1)
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    theta = golden * i
    return np.stack([np.cos(theta) * r, y, np.sin(theta) * r], axis=-1)


# ---------------------------------------------------------------------------
# clipped integrals (ad-compatible core)
# ---------------------------------------------------------------------------


def _hemi_steepness(lam):
    a, b, c, d = HEMI_STEEPNESS_COEFFS
    num = ad.mul(ad.sqrt(lam), ad.add(a, ad.div(b, lam)))
    den = ad.add(ad.add(1.0, ad.div(c, lam)), ad.div(d, ad.mul(lam, lam)))
    return ad.maximum(ad.div(num, den), 1e-3)


def sg_hemisphere_integral(lam, cos_beta):
    """Integral of a unit-amplitude SG over the hemisphere around a normal
    at angle acos(cos_beta) from the lobe axis; smooth interpolation between
    the exact aligned / anti-aligned endpoints."""
    lam = ad.maximum(lam, 1e-6)
    t = _hemi_steepness(lam)
    cos_pos = ad.maximum(cos_beta, 0.0)
    cos_neg = ad.minimum(cos_beta, 0.0)
    inv_a = ad.exp(ad.mul(t, -1.0))
    inv_b = ad.exp(ad.mul(ad.mul(t, cos_pos), -1.0))
    s1_num = ad.sub(1.0, ad.mul(inv_a, inv_b))
    s1_den = ad.add(ad.sub(ad.add(1.0, ad.mul(inv_a, -1.0)), ad.mul(inv_a, inv_b)), inv_b)
    s1 = ad.div(s1_num, ad.maximum(s1_den, 1e-12))
    b = ad.exp(ad.mul(t, cos_neg))
    s2 = ad.div(ad.sub(b, inv_a), ad.maximum(ad.mul(ad.sub(1.0, inv_a), ad.add(b, 1.0)), 1e-12))
    mask = (np.asarray(ad._value(cos_beta)) >= 0.0)
    s = ad.where(mask, s1, s2)
    e1 = ad.exp(ad.mul(lam, -1.0))
    e2 = ad.exp(ad.mul(lam, -2.0))
    a_low = ad.mul(ad.div(ad.sub(e1, e2), lam), TWO_PI)
    a_up = ad.mul(ad.div(ad.sub(1.0, e1), lam), TWO_PI)
    return ad.add(ad.mul(a_low, ad.sub(1.0, s)), ad.mul(a_up, s))


def _dot_last(a, b):
    return ad.reduce_sum(ad.mul(a, b), axis=-1, keepdims=True)


def _clipped_cosine_light(xi, lam, n):
    """Per-lobe integral over the n-hemisphere of SG(w; xi, lam) max(w.n, 0)
    for unit amplitude, via the difference-of-SGs cosine expansion."""
    v = ad.add(ad.mul(xi, lam), DIFF_COS_SHARPNESS * n)
    lam_p = ad.maximum(ad.l2norm(v, axis=-1, keepdims=True), 1e-9)
    xi_p = ad.div(v, lam_p)
    scale = ad.exp(ad.sub(lam_p, ad.add(lam, DIFF_COS_SHARPNESS)))
    cos_p = _dot_last(xi_p, n)
    cos_l = _dot_last(xi, n)
    term1 = ad.mul(ad.mul(scale, sg_hemisphere_integral(lam_p, cos_p)), DIFF_COS_SCALE)
    term2 = ad.mul(sg_hemisphere_integral(lam, cos_l), DIFF_COS_OFFSET)
    return ad.sub(term1, term2)


def shade_points_diffuse(xi, lam, mu, n, albedo):
    """Diffuse radiance (albedo/pi times clipped illumination-cosine
    integral) for P points under L lobes: returns (P, 3).

    xi (L,3), lam (L,1), mu (L,3) may be tensors; n (P,3) and view geometry
    are numeric.
    """
    n = np.asarray(n, dtype=np.float64)
    n3 = n[:, None, :]  # (P,1,3)
    conv = _clipped_cosine_light(xi, lam, n3)          # (P,L,1)
    per_lobe = ad.mul(mu, conv)                        # (P,L,3)
    total = ad.maximum(ad.reduce_sum(per_lobe, axis=-2), 0.0)  # (P,3)
    return ad.mul(ad.div(albedo, math.pi), total)


def _warp_ndf(n, omega_o, roughness):
    """Isotropic SG warp of the half-vector NDF into the incident domain,
    plus the Fresnel-geometry factor at the representative directions."""
    n = np.asarray(n, dtype=np.float64)
    omega_o = np.asarray(omega_o, dtype=np.float64)
    d = np.maximum(np.sum(n * omega_o, axis=-1, keepdims=True), 0.0)  # (P,1)
    ndf_lam = 2.0 / roughness ** 4
    ndf_mu = 1.0 / (math.pi * roughness ** 4)
    wxi = 2.0 * d * n - omega_o
    wxi = wxi / np.maximum(np.linalg.norm(wxi, axis=-1, keepdims=True), 1e-12)
    wlam = ndf_lam / (4.0 * np.maximum(d, 1e-4))
    h = wxi + omega_o
    h = h / np.maximum(np.linalg.norm(h, axis=-1, keepdims=True), 1e-12)
    return d, wxi, wlam, h, ndf_mu


def _fresnel_geometry(d, wxi, h, n, omega_o, roughness, f0):
    vh = np.maximum(np.sum(h * omega_o, axis=-1, keepdims=True), 0.0)
    fresnel = f0 + (1.0 - f0) * 2.0 ** (-(5.55473 * vh + 6.8316) * vh)
    k = (roughness + 1.0) ** 2 / 8.0
    dot1 = np.maximum(np.sum(wxi * n, axis=-1, keepdims=True), 0.0)
    g1 = dot1 / (dot1 * (1.0 - k) + k)
    g2 = d / (d * (1.0 - k) + k)
    return fresnel * g1 * g2 / (4.0 * np.maximum(dot1 * d, 1e-4))


def shade_points_specular(xi, lam, mu, n, omega_o, spec_albedo, config: BRDFConfig):
    """Specular radiance for P points under L lobes: returns (P, 3).

    spec_albedo is (P,1) (tensor-friendly); back-facing points shade to 0.
    """
    n = np.asarray(n, dtype=np.float64)
    omega_o = np.asarray(omega_o, dtype=np.float64)
    d, wxi, wlam, h, ndf_mu = _warp_ndf(n, omega_o, config.roughness)
    m_factor = _fresnel_geometry(d, wxi, h, n, omega_o, config.roughness, config.f0)
    front = (d[:, 0] > 0.0).astype(np.float64)[:, None]

    # product of each light lobe with the warped NDF lobe
    xi_l = ad.mul(xi, lam)                               # (L,3)
    v = ad.add(xi_l, (wlam * wxi)[:, None, :])           # (P,L,3)
    lam_p = ad.maximum(ad.l2norm(v, axis=-1, keepdims=True), 1e-9)
    xi_p = ad.div(v, lam_p)
    scale = ad.exp(ad.sub(lam_p, ad.add(lam, wlam[:, None, :1])))
    conv = _clipped_cosine_light_from(xi_p, lam_p, scale, n[:, None, :])
    per_lobe = ad.mul(mu, conv)                          # (P,L,3)
    total = ad.maximum(ad.reduce_sum(per_lobe, axis=-2), 0.0)
    amp = ad.mul(spec_albedo, ndf_mu * m_factor * front)  # (P,1)
    return ad.mul(amp, total)


def _clipped_cosine_light_from(xi_p, lam_p, scale_p, n3):
    """Same as _clipped_cosine_light but starting from an existing product
    lobe (amplitude factor scale_p)."""
    v = ad.add(ad.mul(xi_p, lam_p), DIFF_COS_SHARPNESS * n3)
    lam_q = ad.maximum(ad.l2norm(v, axis=-1, keepdims=True), 1e-9)
    xi_q = ad.div(v, lam_q)
    scale_q = ad.exp(ad.sub(lam_q, ad.add(lam_p, DIFF_COS_SHARPNESS)))
    term1 = ad.mul(ad.mul(ad.mul(scale_q, sg_hemisphere_integral(lam_q, _dot_last(xi_q, n3))), DIFF_COS_SCALE), scale_p)
    term2 = ad.mul(ad.mul(sg_hemisphere_integral(lam_p, _dot_last(xi_p, n3)), DIFF_COS_OFFSET), scale_p)
    return ad.sub(term1, term2)


def shade_points(xi, lam, mu, n, omega_o, albedo, spec_albedo, config: BRDFConfig,
                 albedo_base=None):
    """Full physically-based shade: returns dict with rgb / diffuse /
    specular / diffuse_base components, each (P, 3))."""
    diffuse = shade_points_diffuse(xi, lam, mu, n, albedo)
    if albedo_base is None:
        diffuse_base = diffuse
    else:
        diffuse_base = shade_points_diffuse(xi, lam, mu, n, albedo_base)
    if config.k_s > 0:
        specular = shade_points_specular(xi, lam, mu, n, omega_o, spec_albedo, config)
        rgb = ad.add(diffuse, ad.mul(specular, float(config.k_s)))
    else:
        specular = ad.mul(diffuse, 0.0)
        rgb = diffuse
    rgb = ad.maximum(rgb, 0.0)
    return {"rgb": rgb, "diffuse": diffuse, "specular": specular,
            "diffuse_base": diffuse_base}


# ---------------------------------------------------------------------------
# spec-surface single-point wrappers
# ---------------------------------------------------------------------------


def diffuse_radiance(env: EnvironmentMap, point: ShadePoint) -> np.ndarray:
    xi, lam, mu = env.stacked()
    out = shade_points_diffuse(xi, lam, mu, point.n[None, :], point.a[None, :])
    return np.asarray(ad._value(out))[0]


def specular_radiance(env: EnvironmentMap, point: ShadePoint, config: BRDFConfig) -> np.ndarray:
    if point.backfacing:
        return np.zeros(3)
    xi, lam, mu = env.stacked()
    out = shade_points_specular(xi, lam, mu, point.n[None, :], point.omega_o[None, :],
                                np.array([[point.s]]), config)
    return np.asarray(ad._value(out))[0]


@dataclass
class ShadeResult:
    rgb: np.ndarray
    diffuse: np.ndarray
    specular: np.ndarray
    diffuse_base: np.ndarray


def render_pbr(env: EnvironmentMap, point: ShadePoint, config: BRDFConfig) -> ShadeResult:
    """r_d + k_s * r_s with separated components; diffuse uses point.a,
    while point.a_base (if set) feeds the base-albedo diffuse component."""
    xi, lam, mu = env.stacked()
    out = shade_points(
        xi, lam, mu, point.n[None, :], point.omega_o[None, :],
        point.a[None, :], np.array([[point.s]]), config,
        albedo_base=None if point.a_base is None else point.a_base[None, :],
    )
    return ShadeResult(*(np.asarray(ad._value(out[k]))[0]
                         for k in ("rgb", "diffuse", "specular", "diffuse_base")))


# ---------------------------------------------------------------------------
# Monte Carlo reference integrator
# ---------------------------------------------------------------------------


@dataclass
class OracleResult:
    rgb: np.ndarray
    diffuse: np.ndarray
    specular: np.ndarray
    stderr: float


def _onb(n):
    t = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(n, t)
    b1 /= np.linalg.norm(b1)
    return b1, np.cross(n, b1)


def mc_render_oracle(env: EnvironmentMap, point: ShadePoint, config: BRDFConfig,
                     sample_count: int, seed: int = 0) -> OracleResult:
    """Monte Carlo estimate of the non-emitting rendering equation with the
    exact clamped cosine and the exact (half-vector SG NDF) BRDF.

    Pure diffuse (k_s = 0) uses cosine-weighted hemisphere sampling. With an
    active specular term, half the samples importance-sample the NDF through
    the reflection map and the two strategies are combined with the balance
    heuristic, keeping the estimator unbiased while taming the variance of
    sharp lobes.
    """
    if sample_count < 1000:
        raise ShadingError("sample_count must be >= 1000")
    rng = np.random.default_rng(seed)
    n, wo = point.n, point.omega_o
    d = max(float(n @ wo), 0.0)
    use_spec = config.k_s > 0 and d > 0
    b1, b2 = _onb(n)
    rough = config.roughness
    ndf_lam = 2.0 / rough ** 4
    ndf_mu = 1.0 / (math.pi * rough ** 4)

    n_cos = sample_count // 2 if use_spec else sample_count
    n_ndf = sample_count - n_cos if use_spec else 0
    u1, u2 = rng.random(n_cos), rng.random(n_cos)
    ct = np.sqrt(u1)
    st = np.sqrt(1.0 - u1)
    ph = TWO_PI * u2
    wi = (st * np.cos(ph))[:, None] * b1 + (st * np.sin(ph))[:, None] * b2 + ct[:, None] * n
    if n_ndf:
        u1h, u2h = rng.random(n_ndf), rng.random(n_ndf)
        cth = 1.0 + np.log(u1h + (1.0 - u1h) * np.exp(-2.0 * ndf_lam)) / ndf_lam
        sth = np.sqrt(np.maximum(0.0, 1.0 - cth ** 2))
        phh = TWO_PI * u2h
        h = (sth * np.cos(phh))[:, None] * b1 + (sth * np.sin(phh))[:, None] * b2 + cth[:, None] * n
        wi = np.concatenate([wi, 2.0 * (h @ wo)[:, None] * h - wo], axis=0)

    cosw = np.maximum(wi @ n, 0.0)
    xi, lam, mu = env.stacked()
    light = (mu[None] * np.exp(lam[None] * ((wi @ xi.T)[..., None] - 1.0))).sum(axis=1)

    f_diff = light * (point.a / math.pi)[None, :] * cosw[:, None]
    if use_spec:
        hh = wi + wo
        hh /= np.maximum(np.linalg.norm(hh, axis=-1, keepdims=True), 1e-12)
        ndf = ndf_mu * np.exp(ndf_lam * ((hh @ n) - 1.0))
        vh = np.maximum(hh @ wo, 0.0)
        fresnel = config.f0 + (1.0 - config.f0) * 2.0 ** (-(5.55473 * vh + 6.8316) * vh)
        k = (rough + 1.0) ** 2 / 8.0
        g1 = lambda a_: a_ / (a_ * (1.0 - k) + k)
        brdf_s = point.s * ndf * fresnel * g1(np.maximum(wi @ n, 0.0)) * g1(d) \
            / (4.0 * np.maximum(wi @ n, 0.0) * d + 1e-9)
        f_spec = light * (brdf_s * cosw)[:, None]
        p_cos = cosw / math.pi
        c_sg = ndf_lam / (TWO_PI * (1.0 - np.exp(-2.0 * ndf_lam)))
        p_h = c_sg * np.exp(ndf_lam * ((hh @ n) - 1.0))
        p_ndf = p_h / np.maximum(4.0 * np.abs(hh @ wo), 1e-12)
        pmix = 0.5 * p_cos + 0.5 * p_ndf
        w = np.where(pmix > 1e-12, 1.0 / np.maximum(pmix, 1e-300), 0.0)[:, None]
        diff_contrib = f_diff * w
        spec_contrib = f_spec * w
    else:
        diff_contrib = light * (point.a / math.pi)[None, :] * math.pi
        spec_contrib = np.zeros_like(diff_contrib)

    diffuse = diff_contrib.mean(axis=0)
    specular = spec_contrib.mean(axis=0)
    total_contrib = diff_contrib + config.k_s * spec_contrib
    stderr = float(np.mean(total_contrib.std(axis=0) / math.sqrt(len(total_contrib))))
    return OracleResult(diffuse + config.k_s * specular, diffuse, specular, stderr)


# ---------------------------------------------------------------------------
# utilities for tests, synthesis and inspection
# ---------------------------------------------------------------------------


def random_environment(rng: np.random.Generator, n_lobes: int = 12,
                       sharpness_range=(8.0, 64.0), energy_scale=(2.0, 6.0)) -> EnvironmentMap:
    """Random full-sphere environment with total energy about pi*U(scale)."""
    xi = fibonacci_directions(n_lobes) + rng.normal(0.0, 0.15, (n_lobes, 3))
    xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
    lam = np.exp(rng.uniform(np.log(sharpness_range[0]), np.log(sharpness_range[1]), (n_lobes, 1)))
    mu = rng.uniform(0.0, 1.0, (n_lobes, 3))
    energy = (TWO_PI * mu * (-np.expm1(-2.0 * lam)) / lam).sum()
    mu *= rng.uniform(*energy_scale) / max(energy, 1e-9) * math.pi
    return EnvironmentMap.from_stacked(xi, lam, mu)


def env_eval(env: EnvironmentMap, w: np.ndarray) -> np.ndarray:
    """Environment radiance at unit direction(s)."""
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    xi, lam, mu = env.stacked()
    return (mu[None] * np.exp(lam[None] * ((w @ xi.T)[..., None] - 1.0))).sum(axis=1)


def env_to_latlong(env: EnvironmentMap, height: int, width: int) -> np.ndarray:
    """Rasterize to a lat-long radiance image (float32, HxWx3)."""
    theta = (np.arange(height) + 0.5) / height * math.pi
    phi = (np.arange(width) + 0.5) / width * TWO_PI - math.pi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(T) * np.cos(P), np.cos(T), np.sin(T) * np.sin(P)], axis=-1)
    vals = env_eval(env, dirs.reshape(-1, 3)).reshape(height, width, 3)
    return vals.astype(np.float32)
