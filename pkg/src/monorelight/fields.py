"""Neural-field decoders for both statistical models.

Shape/appearance model: a deformation field mapping points into a shared
reference frame (plus a semantic feature vector), a reference SDF evaluated
there, and a non-physical radiance function. Appearance-factorization
model: diffuse/specular albedo decoders, an additive albedo refinement
field, and a spherical-Gaussian illumination decoder. Every decoder is an
MLP over a ParamStore group; evaluation dispatches across plain numpy
(tracing inner loops), tape tensors (training) and jets (spatial
gradients), so each decoder body is written once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import autodiff as ad
from .params import ParamStore
from .shading import fibonacci_directions


@dataclass
class MLPConfig:
    hidden: list
    activation: str = "softplus"      # "softplus" | "softplus100"
    pe_frequencies: int = 0           # positional encoding on the leading 3 dims
    skips: tuple = ()                 # hidden-layer indices that re-see the input

    def __post_init__(self):
        if len(self.hidden) < 1:
            raise ValueError("MLP needs at least one hidden layer")
        if any(w <= 0 for w in self.hidden):
            raise ValueError("hidden widths must be positive")


def positional_encoding(x, frequencies: int):
    """[x, sin(2^k x), cos(2^k x)] for k < frequencies, on the last axis."""
    if frequencies == 0:
        return x
    parts = [x]
    for k in range(frequencies):
        scaled = ad.mul(x, float(2 ** k))
        parts.append(ad.sin(scaled))
        parts.append(ad.cos(scaled))
    return ad.concat(parts, axis=-1)


def pe_dim(in_dim: int, frequencies: int) -> int:
    return in_dim * (1 + 2 * frequencies)


class MLP:
    """Fully connected stack over one ParamStore group."""

    def __init__(self, group: str, in_dim: int, out_dim: int, config: MLPConfig):
        self.group = group
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.config = config
        self._beta = 100.0 if config.activation == "softplus100" else 1.0
        widths = list(config.hidden)
        dims = [in_dim] + widths + [out_dim]
        # layers feeding a skip concat shrink so the concat restores the width
        self.layer_dims = []
        for l in range(len(dims) - 1):
            out = dims[l + 1]
            if (l + 1) in config.skips:
                out = dims[l + 1] - in_dim
                if out <= 0:
                    raise ValueError("skip layer width must exceed the input dim")
            d_in = dims[l]
            if l in config.skips:
                d_in = dims[l] + in_dim
            self.layer_dims.append((d_in, out))

    @property
    def n_layers(self):
        return len(self.layer_dims)

    # -- initialization ----------------------------------------------------
    def init_params(self, store: ParamStore, rng: np.random.Generator,
                    scheme: str = "standard", sphere_radius: float = 0.5,
                    zero_head: bool = False):
        arrays = {}
        for l, (d_in, d_out) in enumerate(self.layer_dims):
            if scheme == "geometric":
                if l == self.n_layers - 1:
                    w = rng.normal(math.sqrt(math.pi) / math.sqrt(d_in), 1e-4, size=(d_in, d_out))
                    b = np.full(d_out, -sphere_radius)
                else:
                    w = rng.normal(0.0, math.sqrt(2.0) / math.sqrt(d_out), size=(d_in, d_out))
                    b = np.zeros(d_out)
            else:
                w = rng.normal(0.0, math.sqrt(2.0 / d_in), size=(d_in, d_out))
                b = np.zeros(d_out)
            if zero_head and l == self.n_layers - 1:
                w = np.zeros((d_in, d_out))
                b = np.zeros(d_out)
            arrays[f"w{l}"] = w
            arrays[f"b{l}"] = b
        store.add_group(self.group, arrays)

    def params_view(self, store: ParamStore, tape: bool) -> dict:
        if tape:
            return {k: store.tensor(self.group, k) for k in store.groups[self.group]}
        return {k: store.value(self.group, k) for k in store.groups[self.group]}

    # -- evaluation ----------------------------------------------------------
    def apply(self, params: dict, x):
        """Forward pass; ``x`` may be ndarray, Tensor or Jet of either."""
        h = x
        inv_sqrt2 = 1.0 / math.sqrt(2.0)
        for l in range(self.n_layers):
            if l in self.config.skips:
                h = ad.mul(ad.concat([h, x], axis=-1), inv_sqrt2)
            h = ad.add(ad.matmul(h, params[f"w{l}"]), params[f"b{l}"])
            if l < self.n_layers - 1:
                h = ad.softplus(h, beta=self._beta)
        return h


@dataclass
class ModelDims:
    z_sdf: int = 32
    z_r: int = 32
    z_a: int = 32
    z_s: int = 16
    z_l: int = 16
    gamma: int = 32
    n_lobes: int = 12


# latent initialisation: zero-mean with small variance keeps new codes near
# the prior mean
LATENT_INIT_STD = 0.01


def latent_group(kind: str, scene: str) -> str:
    return f"z_{kind}/{scene}"


def add_latent(store: ParamStore, kind: str, scene: str, dim: int,
               rng: np.random.Generator | None = None, std: float = 0.0):
    value = np.zeros(dim) if rng is None or std == 0 else rng.normal(0.0, std, size=dim)
    store.add_group(latent_group(kind, scene), {"v": value})


def latent(store: ParamStore, kind: str, scene: str, tape: bool):
    g = latent_group(kind, scene)
    return store.tensor(g, "v") if tape else store.value(g, "v")


def _rows(z, n: int):
    """Broadcast one latent vector to n rows (Tensor-aware)."""
    dim = z.shape[-1] if hasattr(z, "shape") else len(z)
    row = ad.reshape(z, (1, dim))
    return ad.broadcast_to(row, (n, dim))


class ShapeAppearanceModel:
    """Deformation + reference SDF + non-physical renderer (auto-decoder)."""

    GROUPS = ("theta_def", "theta_ref", "theta_r")

    def __init__(self, dims: ModelDims = None, def_cfg: MLPConfig = None,
                 ref_cfg: MLPConfig = None, rad_cfg: MLPConfig = None,
                 ref_sphere_radius: float = 0.5):
        self.dims = dims or ModelDims()
        self.def_cfg = def_cfg or MLPConfig([256] * 8, "softplus100", pe_frequencies=6, skips=(4,))
        self.ref_cfg = ref_cfg or MLPConfig([256] * 8, "softplus100", skips=(4,))
        self.rad_cfg = rad_cfg or MLPConfig([256] * 4, "softplus")
        self.ref_sphere_radius = ref_sphere_radius

        d = self.dims
        def_in = pe_dim(3, self.def_cfg.pe_frequencies) + d.z_sdf
        self.f_def = MLP("theta_def", def_in, 3 + d.gamma, self.def_cfg)
        self.f_ref = MLP("theta_ref", 3, 1, self.ref_cfg)
        rad_in = 3 + 3 + 3 + d.gamma + d.z_r
        self.f_rad = MLP("theta_r", rad_in, 3, self.rad_cfg)

    def init_params(self, store: ParamStore, rng: np.random.Generator):
        self.f_def.init_params(store, rng, zero_head=True)
        self.f_ref.init_params(store, rng, scheme="geometric",
                               sphere_radius=self.ref_sphere_radius)
        self.f_rad.init_params(store, rng)

    # -- decoders ------------------------------------------------------------
    def deformation_decode(self, x, z_sdf, params: dict):
        """x -> (deformation 3-vector, semantic feature)."""
        n = np.shape(ad._value(x.primal if isinstance(x, ad.Jet) else x))[0]
        feat = positional_encoding(x, self.def_cfg.pe_frequencies)
        zrow = _rows(z_sdf, n)
        out = self.f_def.apply(params, ad.concat([feat, zrow], axis=-1))
        delta = ad.take_last(out, 0, 3)
        gamma = ad.take_last(out, 3, 3 + self.dims.gamma)
        return delta, gamma

    def compose_sdf(self, x, z_sdf, def_params: dict, ref_params: dict):
        """Deform, then evaluate the reference SDF: returns (s, x_ref, gamma)."""
        delta, gamma = self.deformation_decode(x, z_sdf, def_params)
        x_ref = ad.add(x, delta)
        s = self.f_ref.apply(ref_params, x_ref)
        return ad.take_last(s, 0, 1), x_ref, gamma

    def render_radiance(self, x_ref, n, v, gamma, z_r, params: dict):
        """Non-physical radiance; sigmoid keeps the output in [0,1]^3."""
        count = np.shape(ad._value(x_ref))[0]
        zrow = _rows(z_r, count)
        h = ad.concat([x_ref, n, v, gamma, zrow], axis=-1)
        return ad.sigmoid(self.f_rad.apply(params, h))

    # -- convenience ---------------------------------------------------------
    def params_view(self, store: ParamStore, tape: bool) -> dict:
        return {
            "def": self.f_def.params_view(store, tape),
            "ref": self.f_ref.params_view(store, tape),
            "rad": self.f_rad.params_view(store, tape),
        }

    def sdf_numeric(self, store: ParamStore, z_sdf: np.ndarray):
        """Fast plain-numpy SDF closure for sphere tracing / meshing."""
        view = self.params_view(store, tape=False)

        def f(x):
            s, _, _ = self.compose_sdf(np.atleast_2d(np.asarray(x, dtype=np.float64)),
                                       z_sdf, view["def"], view["ref"])
            return s[:, 0]

        return f

    def sdf_gradient(self, x, z_sdf, def_params: dict, ref_params: dict):
        """Spatial gradient of the composed SDF plus primal outputs.

        Returns (grad, s, x_ref, gamma); tape-differentiable when params and
        x are tensors. grad rows are ordered like x.
        """
        xv = ad._value(x)
        npts = xv.shape[0]
        seeds = np.broadcast_to(np.eye(3)[:, None, :], (3, npts, 3)).copy()
        jet = ad.Jet(x, seeds)
        s, x_ref, gamma = self.compose_sdf(jet, z_sdf, def_params, ref_params)
        grad_t = ad.squeeze(s.tangent, -1)            # (3, N)
        grad = ad.reshape(grad_t, (3, npts))
        # rearrange (3, N) -> (N, 3) via matmul-free transpose
        grad = _transpose2(grad)
        return grad, s.primal, x_ref.primal, gamma.primal

    def normals(self, x, z_sdf, def_params: dict, ref_params: dict):
        grad, s, x_ref, gamma = self.sdf_gradient(x, z_sdf, def_params, ref_params)
        norm = ad.l2norm(grad, axis=-1, keepdims=True)
        return ad.div(grad, ad.maximum(norm, 1e-12)), s, x_ref, gamma


def _transpose2(x):
    if isinstance(x, ad.Tensor):
        xv = x.value
        return ad.Tensor(xv.T.copy(), parents=((x, lambda g: g.T.copy()),), name="transpose")
    return np.asarray(x).T.copy()


class AppearanceFactorModel:
    """Albedo decoders, albedo refinement and SG illumination (auto-decoder)."""

    GROUPS = ("theta_a", "theta_s", "theta_ar", "theta_l")

    def __init__(self, dims: ModelDims = None, alb_cfg: MLPConfig = None,
                 spec_cfg: MLPConfig = None, ref_cfg: MLPConfig = None,
                 illum_cfg: MLPConfig = None, init_sharpness: float = 16.0,
                 init_amplitude: float = 0.8):
        self.dims = dims or ModelDims()
        d = self.dims
        self.alb_cfg = alb_cfg or MLPConfig([256] * 4, "softplus")
        self.spec_cfg = spec_cfg or MLPConfig([256] * 4, "softplus")
        self.refine_cfg = ref_cfg or MLPConfig([256] * 4, "softplus")
        self.illum_cfg = illum_cfg or MLPConfig([128] * 2, "softplus")
        self.f_albedo = MLP("theta_a", 3 + d.gamma + d.z_a, 3, self.alb_cfg)
        self.f_spec = MLP("theta_s", 3 + d.z_s, 1, self.spec_cfg)
        self.f_refine = MLP("theta_ar", 3 + d.gamma, 3, self.refine_cfg)
        self.f_illum = MLP("theta_l", d.z_l, d.n_lobes * 7, self.illum_cfg)
        self.anchors = fibonacci_directions(d.n_lobes)
        self.init_sharpness = init_sharpness
        self.init_amplitude = init_amplitude

    def init_params(self, store: ParamStore, rng: np.random.Generator):
        self.f_albedo.init_params(store, rng)
        self.f_spec.init_params(store, rng)
        self.f_refine.init_params(store, rng, zero_head=True)
        self.f_illum.init_params(store, rng, zero_head=True)

    # -- decoders ------------------------------------------------------------
    def albedo_decode(self, x_ref, gamma, z_a, params: dict):
        n = np.shape(ad._value(x_ref))[0]
        h = ad.concat([x_ref, gamma, _rows(z_a, n)], axis=-1)
        return ad.sigmoid(self.f_albedo.apply(params, h))

    def specular_decode(self, x_ref, z_s, params: dict):
        n = np.shape(ad._value(x_ref))[0]
        h = ad.concat([x_ref, _rows(z_s, n)], axis=-1)
        return ad.sigmoid(self.f_spec.apply(params, h))

    def refinement_decode(self, x_ref, gamma, params: dict):
        """Additive albedo correction in (-1, 1)^3; zero at initialization."""
        h = ad.concat([x_ref, gamma], axis=-1)
        return ad.tanh(self.f_refine.apply(params, h))

    def refined_albedo(self, x_ref, gamma, z_a, alb_params: dict,
                       refine_params: dict, k_r: float):
        """base + k_r * refinement, clamped to [0,1]^3."""
        base = self.albedo_decode(x_ref, gamma, z_a, alb_params)
        if k_r == 0.0:
            return base, base, None
        corr = self.refinement_decode(x_ref, gamma, refine_params)
        out = ad.clip(ad.add(base, ad.mul(corr, float(k_r))), 0.0, 1.0)
        return out, base, corr

    def illumination_decode(self, z_l, params: dict):
        """z_l -> stacked SG lobes (directions (L,3), sharpness (L,1), rgb (L,3)).

        Raw head outputs are offsets: directions attach to fixed anchor
        points so a zero head yields a uniform lobe layout, sharpness and
        amplitude pass through shifted softplus maps to stay positive.
        """
        dim = self.dims.z_l
        raw = self.f_illum.apply(params, ad.reshape(z_l, (1, dim)))
        raw = ad.reshape(raw, (self.dims.n_lobes, 7))
        d_raw = ad.add(ad.take_last(raw, 0, 3), self.anchors)
        norm = ad.l2norm(d_raw, axis=-1, keepdims=True)
        xi = ad.div(d_raw, ad.maximum(norm, 1e-12))
        lam = ad.add(ad.softplus(ad.add(ad.take_last(raw, 3, 4), _softplus_inv(self.init_sharpness))), 1e-2)
        mu = ad.softplus(ad.add(ad.take_last(raw, 4, 7), _softplus_inv(self.init_amplitude)))
        return xi, lam, mu

    def params_view(self, store: ParamStore, tape: bool) -> dict:
        return {
            "albedo": self.f_albedo.params_view(store, tape),
            "spec": self.f_spec.params_view(store, tape),
            "refine": self.f_refine.params_view(store, tape),
            "illum": self.f_illum.params_view(store, tape),
        }


def _softplus_inv(y: float) -> float:
    return float(np.log(np.expm1(y))) if y < 30 else float(y)
