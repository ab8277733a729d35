"""Analytic SDFs for synthetic ground truth, plus sampling utilities.

All scenes live inside a unit bounding sphere centered at the origin; every
tolerance in the package is expressed in those normalized units. Sphere
SDFs are exact. Ellipsoids use the first-order-accurate ratio approximation
(exact zero set, near-unit gradient close to the surface) and smooth unions
use the polynomial smooth-min, so both are distance bounds rather than
exact distances; Eikonal assertions for them use a relaxed [0.8, 1.05]
band away from the medial axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCENE_RADIUS = 1.0


class GeometryError(RuntimeError):
    pass


def _pts(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(1, 3) if x.ndim == 1 else x


class AnalyticSDF:
    """Base: vectorized signed distance and analytic spatial gradient."""

    kind = "abstract"
    is_exact = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class Sphere(AnalyticSDF):
    center: np.ndarray
    radius: float
    kind = "sphere"
    is_exact = True

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.radius <= 0:
            raise GeometryError("sphere radius must be positive")

    def __call__(self, x):
        d = _pts(x) - self.center
        return np.linalg.norm(d, axis=-1) - self.radius

    def gradient(self, x):
        d = _pts(x) - self.center
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.where(n > 0, n, 1.0)

    def surface_points(self, directions):
        return self.center + self.radius * directions

    def surface_normals(self, points):
        return self.gradient(points)


@dataclass
class Ellipsoid(AnalyticSDF):
    center: np.ndarray
    radii: np.ndarray
    kind = "ellipsoid"
    is_exact = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.radii = np.asarray(self.radii, dtype=np.float64)
        if np.any(self.radii <= 0):
            raise GeometryError("ellipsoid radii must be positive")

    def __call__(self, x):
        p = (_pts(x) - self.center) / self.radii
        k0 = np.linalg.norm(p, axis=-1)
        k1 = np.linalg.norm(p / self.radii, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            d = np.where(k1 > 0, k0 * (k0 - 1.0) / np.where(k1 > 0, k1, 1.0), -np.min(self.radii))
        return d

    def gradient(self, x):
        # gradient of k0 (k0 - 1) / k1 by the chain rule
        q = _pts(x) - self.center
        p = q / self.radii
        w = p / self.radii
        k0 = np.linalg.norm(p, axis=-1, keepdims=True)
        k1 = np.linalg.norm(w, axis=-1, keepdims=True)
        k0s = np.where(k0 > 0, k0, 1.0)
        k1s = np.where(k1 > 0, k1, 1.0)
        g_k0 = w / k0s
        g_k1 = (w / self.radii ** 2) / k1s
        grad = (2.0 * k0 - 1.0) / k1s * g_k0 - (k0 * (k0 - 1.0)) / k1s ** 2 * g_k1
        return grad

    def surface_points(self, directions):
        return self.center + self.radii * directions

    def surface_normals(self, points):
        n = (_pts(points) - self.center) / self.radii ** 2
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


@dataclass
class SmoothUnion(AnalyticSDF):
    parts: list
    k: float
    kind = "smooth-union"
    is_exact = False

    def __post_init__(self):
        if len(self.parts) < 2:
            raise GeometryError("smooth union needs at least two parts")
        if self.k <= 0:
            raise GeometryError("blend smoothness k must be positive")

    def __call__(self, x):
        x = _pts(x)
        d = self.parts[0](x)
        for part in self.parts[1:]:
            d = _smooth_min(d, part(x), self.k)
        return d

    def gradient(self, x):
        x = _pts(x)
        d = self.parts[0](x)
        g = self.parts[0].gradient(x)
        for part in self.parts[1:]:
            d2 = part(x)
            g2 = part.gradient(x)
            d, g = _smooth_min_grad(d, g, d2, g2, self.k)
        return g


def _smooth_min(a, b, k):
    h = np.clip(0.5 + 0.5 * (b - a) / k, 0.0, 1.0)
    return b * (1.0 - h) + a * h - k * h * (1.0 - h)


def _smooth_min_grad(a, ga, b, gb, k):
    h = np.clip(0.5 + 0.5 * (b - a) / k, 0.0, 1.0)
    val = b * (1.0 - h) + a * h - k * h * (1.0 - h)
    inside = ((h > 0.0) & (h < 1.0)).astype(np.float64)
    dval_dh = (a - b) - k * (1.0 - 2.0 * h)
    dh = inside * 0.5 / k
    h_ = h[..., None]
    coeff = (dval_dh * dh)[..., None]
    grad = gb * (1.0 - h_) + ga * h_ + coeff * (gb - ga)
    return val, grad


def sdf_normal(field, x: np.ndarray) -> np.ndarray:
    """Normalized spatial gradient of any SDF exposing ``gradient``."""
    g = np.asarray(field.gradient(_pts(x)), dtype=np.float64)
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    if np.any(n < 1e-9):
        raise GeometryError("vanishing SDF gradient; jitter the query point")
    return g / n


def sample_volume(count: int, seed: int, radius: float = SCENE_RADIUS) -> np.ndarray:
    """Uniform samples inside the scene bounding sphere."""
    if count < 1:
        raise GeometryError("count must be >= 1")
    rng = np.random.default_rng(seed)
    d = _random_directions(rng, count)
    r = radius * rng.random(count) ** (1.0 / 3.0)
    return d * r[:, None]


def _random_directions(rng, count):
    v = rng.normal(size=(count, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass
class SurfaceSamples:
    points: np.ndarray                      # (N, 3)
    normals: np.ndarray                     # (N, 3) unit
    landmark_ids: np.ndarray | None = None  # (N,) int, -1 for plain samples

    def __post_init__(self):
        if len(self.points) != len(self.normals):
            raise GeometryError("points/normals length mismatch")
        norms = np.linalg.norm(self.normals, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise GeometryError("normals must be unit length")
        if self.landmark_ids is not None:
            ids = self.landmark_ids[self.landmark_ids >= 0]
            if len(ids) != len(set(ids.tolist())):
                raise GeometryError("landmark ids must be distinct")


MAX_SAMPLE_ATTEMPTS = 10 ** 6


def sample_surface(sdf: AnalyticSDF, count: int, seed: int, tol: float = 1e-5) -> SurfaceSamples:
    """Deterministic surface samples with |f| < tol and analytic normals.

    Candidates are drawn on the component surfaces (parametric, exact) and
    Newton-projected onto the composite zero set; candidates that fail to
    converge are rejected.
    """
    if count < 1:
        raise GeometryError("count must be >= 1")
    rng = np.random.default_rng(seed)
    parts = sdf.parts if isinstance(sdf, SmoothUnion) else [sdf]
    accepted_p: list[np.ndarray] = []
    accepted_n: list[np.ndarray] = []
    total = 0
    attempts = 0
    while total < count:
        batch = max(count - total, 64)
        attempts += batch
        if attempts > MAX_SAMPLE_ATTEMPTS:
            raise GeometryError("surface sampling exceeded the attempt budget")
        pick = rng.integers(0, len(parts), size=batch)
        dirs = _random_directions(rng, batch)
        cand = np.empty((batch, 3))
        for i, part in enumerate(parts):
            mask = pick == i
            if np.any(mask):
                cand[mask] = part.surface_points(dirs[mask])
        cand, ok = _project_to_surface(sdf, cand, tol)
        cand = cand[ok]
        if len(cand) == 0:
            continue
        normals = sdf_normal(sdf, cand)
        accepted_p.append(cand)
        accepted_n.append(normals)
        total += len(cand)
    points = np.concatenate(accepted_p)[:count]
    normals = np.concatenate(accepted_n)[:count]
    return SurfaceSamples(points, normals)


def _project_to_surface(sdf, x, tol, iters: int = 30):
    x = x.copy()
    for _ in range(iters):
        f = sdf(x)
        if np.all(np.abs(f) < tol * 0.1):
            break
        g = sdf.gradient(x)
        gn2 = np.maximum(np.sum(g * g, axis=-1, keepdims=True), 1e-12)
        x = x - (f[:, None] * g) / gn2
    f = sdf(x)
    ok = np.abs(f) < tol
    ok &= np.linalg.norm(x, axis=-1) < SCENE_RADIUS
    return x, ok


# ---------------------------------------------------------------------------
# synthetic heads
# ---------------------------------------------------------------------------

# fixed parametric landmark directions (nose, chin, forehead, cheeks)
LANDMARK_DIRECTIONS = np.array(
    [
        [0.0, -0.05, 1.0],
        [0.0, -0.75, 0.55],
        [0.0, 0.55, 0.75],
        [0.62, 0.0, 0.72],
        [-0.62, 0.0, 0.72],
    ]
)
LANDMARK_DIRECTIONS = LANDMARK_DIRECTIONS / np.linalg.norm(LANDMARK_DIRECTIONS, axis=-1, keepdims=True)

_BASE_CRANIUM_RADII = np.array([0.44, 0.52, 0.46])
_BASE_CHIN_RADIUS = 0.24
_SKIN_TONES = (np.array([0.72, 0.52, 0.42]), np.array([0.38, 0.24, 0.20]))


@dataclass
class SyntheticHead:
    """Analytic head stand-in: geometry, procedural materials, landmarks."""

    seed: int
    sdf: SmoothUnion
    landmarks: np.ndarray          # (5, 3) on the surface
    landmark_ids: np.ndarray       # (5,)
    specular_albedo: float
    params: dict = field(default_factory=dict)
    _blobs: dict = field(default_factory=dict)

    def diffuse_albedo(self, x: np.ndarray) -> np.ndarray:
        """Two-tone albedo mixed by seeded smooth blotches; in [0,1]^3."""
        x = _pts(x)
        b = self._blobs
        acc = np.zeros(len(x))
        for c, s, a in zip(b["centers"], b["sigmas"], b["amps"]):
            d2 = np.sum((x - c) ** 2, axis=-1)
            acc += a * np.exp(-0.5 * d2 / s ** 2)
        w = 1.0 / (1.0 + np.exp(-(acc - b["bias"]) * 4.0))
        tone1, tone2 = b["tone1"], b["tone2"]
        return np.clip(tone1 * (1.0 - w[:, None]) + tone2 * w[:, None], 0.0, 1.0)


def synthetic_head(seed: int) -> SyntheticHead:
    """Seeded head: smooth union of a cranium ellipsoid and a chin sphere."""
    rng = np.random.default_rng(np.random.SeedSequence([911, seed]))
    cr_radii = _BASE_CRANIUM_RADII * rng.uniform(0.85, 1.15, size=3)
    chin_r = _BASE_CHIN_RADIUS * rng.uniform(0.85, 1.15)
    chin_center = np.array([0.0, -0.40, 0.14]) + rng.uniform(-0.03, 0.03, size=3)
    cranium = Ellipsoid(center=np.array([0.0, 0.06, 0.0]), radii=cr_radii)
    chin = Sphere(center=chin_center, radius=chin_r)
    sdf = SmoothUnion(parts=[cranium, chin], k=0.16)

    landmarks = _landmarks_on_surface(sdf)

    tone1 = np.clip(_SKIN_TONES[0] + rng.uniform(-0.06, 0.06, size=3), 0.05, 0.95)
    tone2 = np.clip(_SKIN_TONES[1] + rng.uniform(-0.06, 0.06, size=3), 0.05, 0.95)
    n_blobs = 6
    blob_dirs = _random_directions(rng, n_blobs)
    centers = sdf_projected = _project_to_surface(sdf, blob_dirs * 0.5, 1e-4)[0]
    del sdf_projected
    blobs = {
        "centers": centers,
        "sigmas": rng.uniform(0.12, 0.3, size=n_blobs),
        "amps": rng.uniform(0.4, 1.0, size=n_blobs),
        "bias": 1.0,
        "tone1": tone1,
        "tone2": tone2,
    }
    spec = float(0.1 + 0.4 * rng.random())
    params = {
        "cranium_radii": cr_radii.tolist(),
        "chin_radius": float(chin_r),
        "chin_center": chin_center.tolist(),
        "specular_albedo": spec,
        "tone1": tone1.tolist(),
        "tone2": tone2.tolist(),
    }
    return SyntheticHead(
        seed=seed,
        sdf=sdf,
        landmarks=landmarks,
        landmark_ids=np.arange(len(landmarks)),
        specular_albedo=spec,
        params=params,
        _blobs=blobs,
    )


def _landmarks_on_surface(sdf: AnalyticSDF) -> np.ndarray:
    """Bisect f along fixed directions from outside; |f| < 1e-6 at the result."""
    out = np.empty((len(LANDMARK_DIRECTIONS), 3))
    for i, d in enumerate(LANDMARK_DIRECTIONS):
        lo, hi = 0.0, 1.2
        f_lo = float(sdf((d * lo)[None])[0])
        f_hi = float(sdf((d * hi)[None])[0])
        if f_lo * f_hi > 0:
            raise GeometryError("landmark ray does not cross the surface")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            f_mid = float(sdf((d * mid)[None])[0])
            if f_lo * f_mid <= 0:
                hi, f_hi = mid, f_mid
            else:
                lo, f_lo = mid, f_mid
        out[i] = d * 0.5 * (lo + hi)
    return out
