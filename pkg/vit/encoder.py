"""
Compact, deterministic Vision Transformer encoder and classifier head.

Pre-norm encoder with exact GELU, learned positional embeddings and a CLS
token in row 0. Everything runs in float64 on numpy; `forward` records the
token matrix after the embedding stage and after every encoder layer (the
last entry after the terminal layer-norm).
"""
import hashlib
import logging
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np
from einops import rearrange
from scipy import special, stats

from core.errors import DataError
from core.models import ModelConfig

logger = logging.getLogger(__name__)

LN_EPS = 1e-6
INIT_STD = 0.02
PRNG_NAME = "PCG64"


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every tensor name and shape, in canonical order."""
    c = config
    patch_dim = c.patch_size * c.patch_size * c.channels
    shapes: dict[str, tuple[int, ...]] = {
        "patch_embed.weight": (patch_dim, c.hidden_dim),
        "patch_embed.bias": (c.hidden_dim,),
        "cls_token": (c.hidden_dim,),
        "pos_embed": (c.num_tokens, c.hidden_dim),
    }
    for i in range(c.num_layers):
        p = f"blocks.{i}"
        shapes[f"{p}.norm1.scale"] = (c.hidden_dim,)
        shapes[f"{p}.norm1.shift"] = (c.hidden_dim,)
        for proj in ("q", "k", "v", "out"):
            shapes[f"{p}.attn.{proj}.weight"] = (c.hidden_dim, c.hidden_dim)
            shapes[f"{p}.attn.{proj}.bias"] = (c.hidden_dim,)
        shapes[f"{p}.norm2.scale"] = (c.hidden_dim,)
        shapes[f"{p}.norm2.shift"] = (c.hidden_dim,)
        shapes[f"{p}.mlp.fc1.weight"] = (c.hidden_dim, c.mlp_dim)
        shapes[f"{p}.mlp.fc1.bias"] = (c.mlp_dim,)
        shapes[f"{p}.mlp.fc2.weight"] = (c.mlp_dim, c.hidden_dim)
        shapes[f"{p}.mlp.fc2.bias"] = (c.hidden_dim,)
    shapes["norm.scale"] = (c.hidden_dim,)
    shapes["norm.shift"] = (c.hidden_dim,)
    shapes["head.weight"] = (c.num_classes, c.hidden_dim)
    shapes["head.bias"] = (c.num_classes,)
    return shapes


@dataclass(frozen=True, eq=False)
class Model:
    """Immutable ViT parameters plus architecture."""
    config: ModelConfig
    params: Mapping[str, np.ndarray]

    @classmethod
    def from_params(cls, config: ModelConfig, params: Mapping[str, np.ndarray]) -> "Model":
        """Validate tensors against the config and freeze them."""
        config.validate()
        expected = parameter_shapes(config)
        missing = [name for name in expected if name not in params]
        if missing:
            raise DataError(f"missing tensor(s): {', '.join(missing)}")
        extra = [name for name in params if name not in expected]
        if extra:
            raise DataError(f"unexpected tensor(s) for this config: {', '.join(extra)}")
        frozen = {}
        for name, value in params.items():
            array = np.array(value, dtype=np.float64, copy=True)
            if array.shape != expected[name]:
                raise DataError(f"tensor '{name}' has shape {array.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(array)):
                raise DataError(f"tensor '{name}' holds non-finite values")
            array.setflags(write=False)
            frozen[name] = array
        return cls(config=config, params=MappingProxyType(frozen))

    def with_params(self, updates: Mapping[str, np.ndarray]) -> "Model":
        """New model with some tensors swapped."""
        params = dict(self.params)
        params.update(updates)
        return Model.from_params(self.config, params)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.asarray(self.config.as_tuple(), dtype="<u4").tobytes())
        for name, array in self.params.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class LayerTrace:
    """Token matrices: index 0 after embedding, index l after encoder layer l."""
    layers: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.layers)

    def __getitem__(self, layer: int) -> np.ndarray:
        return self.layers[layer]


def init_random(config: ModelConfig, seed: int) -> Model:
    """Seeded truncated-normal init (std 0.02); biases and shifts zero, LN scales one."""
    config.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    sampler = stats.truncnorm(-2.0, 2.0, loc=0.0, scale=INIT_STD)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".bias") or name.endswith(".shift"):
            params[name] = np.zeros(shape)
        elif name.endswith(".scale"):
            params[name] = np.ones(shape)
        else:
            params[name] = sampler.rvs(size=shape, random_state=rng)
    logger.debug("initialized %s model with seed %d", PRNG_NAME, seed)
    return Model.from_params(config, params)


def layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    mean = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mean) ** 2, axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LN_EPS) * scale + shift


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + special.erf(x / np.sqrt(2.0)))


def attention_weights(model: Model, layer: int, x_norm: np.ndarray) -> np.ndarray:
    """Softmax attention maps of one layer, shape (heads, N, N)."""
    q, k, _ = _qkv(model, layer, x_norm)
    return _attend(model.config, q, k)


def _attend(config: ModelConfig, q: np.ndarray, k: np.ndarray) -> np.ndarray:
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(config.head_dim)
    return special.softmax(scores, axis=-1)


def _qkv(model: Model, layer: int, x_norm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = model.params
    prefix = f"blocks.{layer}.attn"
    heads = model.config.num_heads
    out = []
    for proj in ("q", "k", "v"):
        projected = x_norm @ p[f"{prefix}.{proj}.weight"] + p[f"{prefix}.{proj}.bias"]
        out.append(rearrange(projected, "n (h d) -> h n d", h=heads))
    return out[0], out[1], out[2]


def _self_attention(model: Model, layer: int, x_norm: np.ndarray) -> np.ndarray:
    p = model.params
    q, k, v = _qkv(model, layer, x_norm)
    merged = rearrange(_attend(model.config, q, k) @ v, "h n d -> n (h d)")
    return merged @ p[f"blocks.{layer}.attn.out.weight"] + p[f"blocks.{layer}.attn.out.bias"]


def _mlp(model: Model, layer: int, x_norm: np.ndarray) -> np.ndarray:
    p = model.params
    prefix = f"blocks.{layer}.mlp"
    hidden = gelu(x_norm @ p[f"{prefix}.fc1.weight"] + p[f"{prefix}.fc1.bias"])
    return hidden @ p[f"{prefix}.fc2.weight"] + p[f"{prefix}.fc2.bias"]


def patchify(config: ModelConfig, image: np.ndarray) -> np.ndarray:
    """(W, H, C) image to (num_patches, P*P*C), patches in row-major grid order."""
    return rearrange(
        image, "(gw p1) (gh p2) c -> (gw gh) (p1 p2 c)",
        p1=config.patch_size, p2=config.patch_size,
    )


def embed(model: Model, image: np.ndarray) -> np.ndarray:
    config = model.config
    array = np.asarray(image, dtype=np.float64)
    if array.shape != config.image_shape:
        raise DataError(f"image shape {array.shape} does not match model input {config.image_shape}")
    p = model.params
    patches = patchify(config, array) @ p["patch_embed.weight"] + p["patch_embed.bias"]
    tokens = np.concatenate([p["cls_token"][np.newaxis, :], patches], axis=0)
    return tokens + p["pos_embed"]


def forward(model: Model, image: np.ndarray) -> LayerTrace:
    """Run the encoder and record every layer's token matrix."""
    p = model.params
    x = embed(model, image)
    layers = [x]
    for i in range(model.config.num_layers):
        x = x + _self_attention(model, i, layer_norm(x, p[f"blocks.{i}.norm1.scale"], p[f"blocks.{i}.norm1.shift"]))
        x = x + _mlp(model, i, layer_norm(x, p[f"blocks.{i}.norm2.scale"], p[f"blocks.{i}.norm2.shift"]))
        layers.append(x)
    layers[-1] = layer_norm(x, p["norm.scale"], p["norm.shift"])
    return LayerTrace(tuple(layers))


def cls_token(trace: LayerTrace, layer: int) -> np.ndarray:
    if not 0 <= layer < len(trace):
        raise DataError(f"layer {layer} outside [0, {len(trace) - 1}]")
    return trace[layer][0]


def classify(model: Model, cls: np.ndarray) -> np.ndarray:
    """Affine classifier head W_c . cls + b_c."""
    vector = np.asarray(cls, dtype=np.float64)
    if vector.shape != (model.config.hidden_dim,):
        raise DataError(f"CLS vector has shape {vector.shape}, expected ({model.config.hidden_dim},)")
    return model.params["head.weight"] @ vector + model.params["head.bias"]


def predict(logits: np.ndarray) -> int:
    """Argmax; ties go to the lowest class index."""
    return int(np.argmax(logits))
