"""
Neural implicit representation of the box interior.

- SdfField: SIREN network g(x) giving signed distance, zero level set = surface
- AppearanceField: MLP f(x, v, n) giving linear RGB radiance
- FieldBundle: both networks plus the trainable sharpness s of the opaque density
"""
import math
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator
from torch import nn

from utils.errors import GeometryError, NonFiniteError
from utils.logger import get_logger

logger = get_logger(__name__)

# Output layer scale after geometric init; keeps the sphere prior dominant
_OUTPUT_SCALE = 1e-3
_UNIT_TOL = 1e-6


class EncodingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_freqs_position: int = Field(default=6, ge=0)
    num_freqs_direction: int = Field(default=4, ge=0)
    include_raw_input: bool = True


class SdfConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden_layers: int = Field(default=4, ge=1)
    hidden_width: int = Field(default=64, ge=1)
    skip_layers: Tuple[int, ...] = ()
    omega0: float = Field(default=30.0, gt=0.0)
    init_sharpness: float = Field(default=20.0, gt=0.0)
    sharpness_floor: float = Field(default=1e-3, gt=0.0)
    init_radius: float = Field(default=0.5, gt=0.0, lt=1.0)

    @field_validator("skip_layers")
    @classmethod
    def _skips_inside_network(cls, value, info):
        layers = info.data.get("hidden_layers", 4)
        bad = [k for k in value if not 1 <= k < layers]
        if bad:
            raise ValueError(f"skip_layers must lie in [1, hidden_layers), got {bad}")
        return value


class AppearanceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    hidden_layers: int = Field(default=3, ge=1)
    hidden_width: int = Field(default=64, ge=1)


class FieldConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    encoding: EncodingConfig = EncodingConfig()
    sdf: SdfConfig = SdfConfig()
    appearance: AppearanceConfig = AppearanceConfig()


class PositionalEncoding(nn.Module):
    """[x, sin(2^k pi x), cos(2^k pi x) for k < L], per component."""

    def __init__(self, num_freqs: int, include_raw_input: bool = True):
        super().__init__()
        self.num_freqs = num_freqs
        self.include_raw_input = include_raw_input
        self.register_buffer("bands", (2.0 ** torch.arange(num_freqs, dtype=torch.float64)) * math.pi,
                             persistent=False)

    @property
    def out_dim(self) -> int:
        return (3 if self.include_raw_input else 0) + 3 * 2 * self.num_freqs

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        parts = [x] if self.include_raw_input else []
        if self.num_freqs > 0:
            scaled = x[..., None, :] * self.bands.to(x.dtype)[:, None]
            parts.append(torch.cat([torch.sin(scaled), torch.cos(scaled)], dim=-1).flatten(-2))
        if not parts:
            return x[..., :0]
        return torch.cat(parts, dim=-1)


def encode(x: Union[Sequence[float], torch.Tensor], cfg: EncodingConfig,
           kind: str = "position") -> torch.Tensor:
    """
    Positional encoding of a point (kind="position") or a direction (kind="direction").
    """
    num_freqs = cfg.num_freqs_position if kind == "position" else cfg.num_freqs_direction
    x = torch.as_tensor(x, dtype=torch.float64)
    return PositionalEncoding(num_freqs, cfg.include_raw_input)(x)


class SineLayer(nn.Module):
    def __init__(self, in_dim: int, out_dim: int, omega0: float, first: bool):
        super().__init__()
        self.omega0 = omega0
        self.first = first
        self.linear = nn.Linear(in_dim, out_dim)

    def reset(self, generator: torch.Generator):
        bound = 1.0 / self.linear.in_features if self.first else \
            math.sqrt(6.0 / self.linear.in_features) / self.omega0
        with torch.no_grad():
            self.linear.weight.copy_(_uniform(self.linear.weight.shape, bound, generator))
            self.linear.bias.copy_(_uniform(self.linear.bias.shape, bound, generator))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sin(self.omega0 * self.linear(x))


def _uniform(shape, bound: float, generator: torch.Generator) -> torch.Tensor:
    return (torch.rand(shape, generator=generator, dtype=torch.float64) * 2.0 - 1.0) * bound


class SdfField(nn.Module):
    """
    SIREN signed distance network.

    g(x) = sqrt(|x|^2 + 1e-12) - r0 + h(x), where h is the SIREN residual and r0 the
    init radius. The sphere term stays part of the output for the whole of training; the
    network only ever learns the residual h, which init_geometric makes small.
    """

    def __init__(self, cfg: SdfConfig, encoding: EncodingConfig):
        super().__init__()
        self.cfg = cfg
        self.encoding = PositionalEncoding(encoding.num_freqs_position, encoding.include_raw_input)
        self.register_buffer("init_radius", torch.tensor(cfg.init_radius, dtype=torch.float64))

        in_dim = self.encoding.out_dim
        layers = []
        width_in = in_dim
        for k in range(cfg.hidden_layers):
            if k in cfg.skip_layers:
                width_in += in_dim
            layers.append(SineLayer(width_in, cfg.hidden_width, cfg.omega0, first=(k == 0)))
            width_in = cfg.hidden_width
        self.layers = nn.ModuleList(layers)
        self.output = nn.Linear(cfg.hidden_width, 1)
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        encoded = self.encoding(x)
        h = encoded
        for k, layer in enumerate(self.layers):
            if k in self.cfg.skip_layers:
                h = torch.cat([h, encoded], dim=-1)
            h = layer(h)
        base = torch.sqrt((x * x).sum(dim=-1) + 1e-12) - self.init_radius.to(x.dtype)
        return base + self.output(h)[..., 0]


class AppearanceField(nn.Module):
    """ReLU MLP (enc x, enc v, n) -> linear RGB in (0, 1)."""

    def __init__(self, cfg: AppearanceConfig, encoding: EncodingConfig):
        super().__init__()
        self.position_encoding = PositionalEncoding(encoding.num_freqs_position,
                                                    encoding.include_raw_input)
        self.direction_encoding = PositionalEncoding(encoding.num_freqs_direction,
                                                     encoding.include_raw_input)
        in_dim = self.position_encoding.out_dim + self.direction_encoding.out_dim + 3
        modules = []
        for _ in range(cfg.hidden_layers):
            modules += [nn.Linear(in_dim, cfg.hidden_width), nn.ReLU()]
            in_dim = cfg.hidden_width
        modules.append(nn.Linear(in_dim, 3))
        self.mlp = nn.Sequential(*modules)
        self.double()

    def forward(self, x: torch.Tensor, v: torch.Tensor, n: torch.Tensor) -> torch.Tensor:
        features = torch.cat([self.position_encoding(x), self.direction_encoding(v), n], dim=-1)
        return torch.sigmoid(self.mlp(features))


class FieldBundle(nn.Module):
    """Geometry, appearance and sharpness: all trainable state."""

    def __init__(self, cfg: FieldConfig):
        super().__init__()
        self.cfg = cfg
        self.sdf_field = SdfField(cfg.sdf, cfg.encoding)
        self.appearance = AppearanceField(cfg.appearance, cfg.encoding)
        floor = cfg.sdf.sharpness_floor
        init = max(cfg.sdf.init_sharpness - floor, 1e-12)
        self.log_sharpness = nn.Parameter(torch.tensor(math.log(init), dtype=torch.float64))

    @property
    def dtype(self) -> torch.dtype:
        return self.log_sharpness.dtype

    def sharpness(self) -> torch.Tensor:
        """s = floor + exp(log_s), positive by construction."""
        return self.cfg.sdf.sharpness_floor + torch.exp(self.log_sharpness)

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        return self.sdf_field(x)

    def sdf_and_gradient(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        SDF values and their exact input gradient.

        Under grad mode the gradient keeps its graph so losses on it (Eikonal) can be
        differentiated again; otherwise both results are detached.
        """
        return sdf_and_gradient(self.sdf_field, x)

    def radiance(self, x: torch.Tensor, v: torch.Tensor, n: torch.Tensor) -> torch.Tensor:
        return self.appearance(x, v, n)

    def numpy_sdf(self, points: np.ndarray) -> np.ndarray:
        """Float64 SDF values of an (N, 3) array, for mesh extraction."""
        with torch.no_grad():
            values = self.sdf(torch.as_tensor(np.asarray(points), dtype=self.dtype))
        return values.cpu().numpy().astype(np.float64)


def sdf_and_gradient(sdf_fn, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    create_graph = torch.is_grad_enabled()
    with torch.enable_grad():
        if not x.requires_grad:
            x = x.detach().requires_grad_(True)
        value = sdf_fn(x)
        (gradient,) = torch.autograd.grad(value.sum(), x, create_graph=create_graph)
    if not create_graph:
        return value.detach(), gradient.detach()
    return value, gradient


def sdf_eval(field, x: Sequence[float]) -> Tuple[float, np.ndarray]:
    """
    Value and gradient of any torch SDF (SdfField, FieldBundle or AnalyticSdf) at one point.
    """
    fn = field.sdf if isinstance(field, FieldBundle) else field
    param = next(iter(field.parameters()), None) if isinstance(field, nn.Module) else None
    dtype = param.dtype if param is not None else torch.float64
    point = torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=dtype).reshape(1, 3)
    if not bool(torch.isfinite(point).all()):
        raise GeometryError(f"sdf_eval got a non-finite point {x}")
    with torch.no_grad():
        value, gradient = sdf_and_gradient(fn, point)
    return float(value[0]), gradient[0].cpu().numpy().astype(np.float64)


def appearance_eval(field: Union[AppearanceField, FieldBundle], x: Sequence[float],
                    v: Sequence[float], n: Sequence[float]) -> np.ndarray:
    """
    Linear RGB radiance at x seen along v with surface normal n.

    Raises:
        GeometryError: If v or n is not unit-norm
    """
    for name, vec in (("v", v), ("n", n)):
        norm = float(np.linalg.norm(np.asarray(vec, dtype=np.float64)))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise GeometryError(f"appearance_eval needs unit {name}, got norm {norm:.9f}")
    module = field.appearance if isinstance(field, FieldBundle) else field
    dtype = next(module.parameters()).dtype
    as_tensor = lambda a: torch.as_tensor(np.asarray(a, dtype=np.float64), dtype=dtype).reshape(1, 3)
    with torch.no_grad():
        rgb = module(as_tensor(x), as_tensor(v), as_tensor(n))
    return rgb[0].cpu().numpy().astype(np.float64)


def init_geometric(field: Union[SdfField, FieldBundle], radius: float = 0.5,
                   seed: int = 0) -> Union[SdfField, FieldBundle]:
    """
    Re-initialize the SDF network so its zero level set is close to a centered sphere.

    Only the residual h is re-drawn and scaled down; the analytic sphere term in
    SdfField.forward is fixed and always added, so radius should match cfg.init_radius.

    Args:
        field: Network to re-initialize in place
        radius: Sphere radius, in (0, 1)
        seed: Seed of the weight draw

    Returns:
        The same field
    """
    if not 0.0 < radius < 1.0:
        raise GeometryError(f"init radius must lie in (0, 1), got {radius}")
    sdf_field = field.sdf_field if isinstance(field, FieldBundle) else field
    generator = torch.Generator().manual_seed(seed)
    dtype = sdf_field.output.weight.dtype

    for layer in sdf_field.layers:
        layer.reset(generator)
    bound = math.sqrt(6.0 / sdf_field.output.in_features) / sdf_field.cfg.omega0 * _OUTPUT_SCALE
    with torch.no_grad():
        sdf_field.output.weight.copy_(_uniform(sdf_field.output.weight.shape, bound, generator))
        sdf_field.output.bias.zero_()
        sdf_field.init_radius.fill_(radius)
    sdf_field.to(dtype)
    logger.debug(f"Geometric init: sphere radius {radius}, seed {seed}")
    return field


def build_fields(cfg: FieldConfig, seed: int = 0, dtype: torch.dtype = torch.float64) -> FieldBundle:
    """Construct and initialize all fields deterministically from seed."""
    torch.manual_seed(seed)
    bundle = FieldBundle(cfg)
    init_geometric(bundle, cfg.sdf.init_radius, seed)
    bundle = bundle.to(dtype)
    logger.info(f"Built fields: SDF {cfg.sdf.hidden_layers}x{cfg.sdf.hidden_width}, "
                f"appearance {cfg.appearance.hidden_layers}x{cfg.appearance.hidden_width}, "
                f"{sum(p.numel() for p in bundle.parameters())} parameters")
    return bundle


def param_gradients(loss: torch.Tensor, params: Union[nn.Module, Dict[str, torch.Tensor]],
                    retain_graph: bool = False) -> Dict[str, torch.Tensor]:
    """
    Reverse-mode gradients of loss with respect to every named parameter.

    Raises:
        NonFiniteError: If the loss or any gradient is non-finite; the message names it
    """
    named = dict(params.named_parameters()) if isinstance(params, nn.Module) else dict(params)
    if not bool(torch.isfinite(loss.detach()).all()):
        raise NonFiniteError(f"Loss is non-finite: {loss.detach()}")
    if not loss.requires_grad:
        return {name: torch.zeros_like(p) for name, p in named.items()}

    grads = torch.autograd.grad(loss, list(named.values()), retain_graph=retain_graph,
                                allow_unused=True)
    out = {}
    for (name, p), g in zip(named.items(), grads):
        g = torch.zeros_like(p) if g is None else g
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteError(f"Non-finite gradient for parameter '{name}'")
        out[name] = g
    return out
