"""Patch embedding plus a small pre-norm ViT that can append learnable
semantic tokens after the linear projection.

Two attention layouts are supported. "full" runs ordinary self-attention over
the concatenated [image, semantic] sequence. "isolated" blocks image tokens
from attending to semantic tokens; it is evaluated segment-wise, so the image
half executes exactly the same numpy calls as an encoder with no semantic
tokens and its outputs are bitwise identical to that run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor
from .tensor_io import load_checkpoint, save_checkpoint

MASK_ISOLATED = "isolated"
MASK_FULL = "full"


class ConfigError(ValueError):
    """Encoder configuration violates its invariants."""


@dataclass
class EncoderConfig:
    image_height: int = 64
    image_width: int = 64
    channels: int = 3
    patch_size: int = 8
    embed_dim: int = 64
    num_layers: int = 4
    num_heads: int = 4
    num_semantic_tokens: int = 0
    mask_mode: str = MASK_ISOLATED

    def __post_init__(self):
        if self.image_height % self.patch_size or self.image_width % self.patch_size:
            raise ConfigError(
                f"image {self.image_height}x{self.image_width} not divisible by patch {self.patch_size}"
            )
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by {self.num_heads} heads")
        if self.num_semantic_tokens < 0:
            raise ConfigError("num_semantic_tokens must be >= 0")
        if self.mask_mode not in (MASK_ISOLATED, MASK_FULL):
            raise ConfigError(f"unknown mask_mode {self.mask_mode!r}")

    @property
    def num_patches(self):
        return (self.image_height // self.patch_size) * (self.image_width // self.patch_size)

    @property
    def patch_dim(self):
        return self.patch_size * self.patch_size * self.channels

    def to_dict(self):
        return {
            "image_height": str(self.image_height),
            "image_width": str(self.image_width),
            "channels": str(self.channels),
            "patch_size": str(self.patch_size),
            "embed_dim": str(self.embed_dim),
            "num_layers": str(self.num_layers),
            "num_heads": str(self.num_heads),
            "num_semantic_tokens": str(self.num_semantic_tokens),
            "mask_mode": self.mask_mode,
        }

    @classmethod
    def from_dict(cls, d):
        kwargs = {k: (v if k == "mask_mode" else int(v)) for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**kwargs)


@dataclass
class SemanticTokens:
    """The learnable group-query embeddings appended to the patch sequence."""

    values: Tensor  # (N, embed_dim)

    @classmethod
    def create(cls, count, dim, rng, dtype=np.float32, std=0.02):
        data = (rng.standard_normal((count, dim)) * std).astype(dtype)
        return cls(values=Tensor(data, requires_grad=True))

    @property
    def count(self):
        return self.values.shape[0]


@dataclass
class AttentionMask:
    """Boolean (M+N)x(M+N) matrix; True means row token may attend to column
    token. Token order is [image tokens, semantic tokens]."""

    allowed: np.ndarray
    mode: str
    num_image_tokens: int
    num_semantic_tokens: int


def build_mask(num_image_tokens, num_semantic_tokens, mode):
    """The isolated layout forbids exactly the image-row x semantic-column
    block; everything else (including every diagonal entry) stays allowed."""
    if num_image_tokens < 1 or num_semantic_tokens < 0:
        raise ConfigError(f"bad token counts M={num_image_tokens}, N={num_semantic_tokens}")
    if mode not in (MASK_ISOLATED, MASK_FULL):
        raise ConfigError(f"unknown mask mode {mode!r}")
    total = num_image_tokens + num_semantic_tokens
    allowed = np.ones((total, total), dtype=bool)
    if mode == MASK_ISOLATED:
        allowed[:num_image_tokens, num_image_tokens:] = False
    return AttentionMask(
        allowed=allowed,
        mode=mode,
        num_image_tokens=num_image_tokens,
        num_semantic_tokens=num_semantic_tokens,
    )


def _init_linear(rng, fan_in, fan_out, dtype, std=0.02):
    w = Tensor((rng.standard_normal((fan_in, fan_out)) * std).astype(dtype), requires_grad=True)
    b = Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True)
    return w, b


def _init_ln(dim, dtype):
    gain = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
    bias = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
    return gain, bias


class TransformerBlock:
    """One pre-norm block: LN -> MHA -> residual, LN -> GELU MLP (4x) -> residual."""

    def __init__(self, dim, num_heads, rng, dtype=np.float32):
        self.num_heads = num_heads
        self.ln1_gain, self.ln1_bias = _init_ln(dim, dtype)
        self.wq, self.bq = _init_linear(rng, dim, dim, dtype)
        self.wk, self.bk = _init_linear(rng, dim, dim, dtype)
        self.wv, self.bv = _init_linear(rng, dim, dim, dtype)
        self.wo, self.bo = _init_linear(rng, dim, dim, dtype)
        self.ln2_gain, self.ln2_bias = _init_ln(dim, dtype)
        self.w1, self.b1 = _init_linear(rng, dim, 4 * dim, dtype)
        self.w2, self.b2 = _init_linear(rng, 4 * dim, dim, dtype)

    @property
    def params(self):
        return {
            "ln1.gain": self.ln1_gain,
            "ln1.bias": self.ln1_bias,
            "attn.wq": self.wq,
            "attn.bq": self.bq,
            "attn.wk": self.wk,
            "attn.bk": self.bk,
            "attn.wv": self.wv,
            "attn.bv": self.bv,
            "attn.wo": self.wo,
            "attn.bo": self.bo,
            "ln2.gain": self.ln2_gain,
            "ln2.bias": self.ln2_bias,
            "mlp.w1": self.w1,
            "mlp.b1": self.b1,
            "mlp.w2": self.w2,
            "mlp.b2": self.b2,
        }

    def _qkv(self, h):
        q = T.linear(h, self.wq, self.bq)
        k = T.linear(h, self.wk, self.bk)
        v = T.linear(h, self.wv, self.bv)
        return q, k, v

    def _mlp(self, x):
        h = T.layer_norm(x, self.ln2_gain, self.ln2_bias)
        return T.add(x, T.linear(T.gelu(T.linear(h, self.w1, self.b1)), self.w2, self.b2))

    def forward_plain(self, x, mask=None):
        h = T.layer_norm(x, self.ln1_gain, self.ln1_bias)
        q, k, v = self._qkv(h)
        attn = T.multi_head_attention(q, k, v, self.num_heads, mask=mask)
        x = T.add(x, T.linear(attn, self.wo, self.bo))
        return self._mlp(x)

    def _sem_half(self, k_img, v_img, x_sem):
        """Semantic queries read keys/values from both segments, which is all
        the isolated mask allows them."""
        h_sem = T.layer_norm(x_sem, self.ln1_gain, self.ln1_bias)
        q_sem, k_sem, v_sem = self._qkv(h_sem)
        k_all = T.concat([k_img, k_sem], axis=-2)
        v_all = T.concat([v_img, v_sem], axis=-2)
        attn_sem = T.multi_head_attention(q_sem, k_all, v_all, self.num_heads)
        x_sem = T.add(x_sem, T.linear(attn_sem, self.wo, self.bo))
        return self._mlp(x_sem)

    def forward_isolated(self, x_img, x_sem):
        """Segment-wise evaluation of the isolated layout.

        The image half is the exact call sequence of forward_plain(x_img):
        image queries only ever meet image keys/values.
        """
        h_img = T.layer_norm(x_img, self.ln1_gain, self.ln1_bias)
        q_img, k_img, v_img = self._qkv(h_img)
        attn_img = T.multi_head_attention(q_img, k_img, v_img, self.num_heads)
        x_img_new = self._mlp(T.add(x_img, T.linear(attn_img, self.wo, self.bo)))
        return x_img_new, self._sem_half(k_img, v_img, x_sem)

    def forward_isolated_sem(self, x_img_in, x_sem):
        """Semantic half only, against a precomputed (frozen) image state
        entering this block; skips the image-side attention and MLP."""
        h_img = T.layer_norm(x_img_in, self.ln1_gain, self.ln1_bias)
        k_img = T.linear(h_img, self.wk, self.bk)
        v_img = T.linear(h_img, self.wv, self.bv)
        return self._sem_half(k_img, v_img, x_sem)


class Encoder:
    """ViT-style encoder over non-overlapping patches.

    Image tokens get a learned positional embedding; semantic tokens do not
    (they are position-free group queries).
    """

    def __init__(self, config, rng=None, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        c = config.embed_dim
        self.patch_w, self.patch_b = _init_linear(rng, config.patch_dim, c, self.dtype)
        self.pos_embed = Tensor(
            (rng.standard_normal((config.num_patches, c)) * 0.02).astype(self.dtype),
            requires_grad=True,
        )
        self.blocks = [TransformerBlock(c, config.num_heads, rng, self.dtype) for _ in range(config.num_layers)]
        self.final_gain, self.final_bias = _init_ln(c, self.dtype)

    @property
    def params(self):
        out = {"patch_proj.weight": self.patch_w, "patch_proj.bias": self.patch_b, "pos_embed": self.pos_embed}
        for i, block in enumerate(self.blocks):
            for name, p in block.params.items():
                out[f"block{i}.{name}"] = p
        out["final_ln.gain"] = self.final_gain
        out["final_ln.bias"] = self.final_bias
        return out

    # -- patch embedding -------------------------------------------------

    def extract_patches(self, image):
        """Row-major PxP patch flattening: pixel order inside a patch is
        (row, col, channel)."""
        image = np.asarray(image)
        p = self.config.patch_size
        *lead, h, w, c = image.shape
        if h != self.config.image_height or w != self.config.image_width or c != self.config.channels:
            raise ConfigError(
                f"image shape {(h, w, c)} does not match config "
                f"{(self.config.image_height, self.config.image_width, self.config.channels)}"
            )
        gh, gw = h // p, w // p
        x = image.reshape(*lead, gh, p, gw, p, c)
        x = np.moveaxis(x, -3, -4)
        return np.ascontiguousarray(x.reshape(*lead, gh * gw, p * p * c))

    def patch_embed(self, image):
        """(…,H,W,3) pixels -> (…,M,C) tokens: flatten patches, project, add
        the per-position embedding."""
        patches = Tensor(self.extract_patches(image).astype(self.dtype, copy=False))
        return T.add(T.linear(patches, self.patch_w, self.patch_b), self.pos_embed)

    # -- transformer stack ------------------------------------------------

    def _validate_mask(self, mask, n):
        m = self.config.num_patches
        total = m + n
        if mask.allowed.shape != (total, total):
            raise ShapeError(f"mask shape {mask.allowed.shape} does not match sequence {total}")
        if mask.num_image_tokens != m or mask.num_semantic_tokens != n:
            raise ShapeError(
                f"mask counts ({mask.num_image_tokens}, {mask.num_semantic_tokens}) "
                f"do not match (M={m}, N={n})"
            )

    def encode(self, img_tokens, sem=None, mask=None):
        """Run the block stack; returns (img_out, sem_out) where sem_out is
        None when no semantic tokens are attached.

        Both segments pass through the final layer norm (uniform treatment).
        """
        m = self.config.num_patches
        if img_tokens.shape[-2] != m or img_tokens.shape[-1] != self.config.embed_dim:
            raise ShapeError(f"img_tokens shape {img_tokens.shape} does not match (M={m}, C={self.config.embed_dim})")
        n = 0 if sem is None else sem.count
        if mask is None:
            mask = build_mask(m, max(n, 0), self.config.mask_mode if n else MASK_FULL)
        self._validate_mask(mask, n)

        if n == 0:
            x = img_tokens
            for block in self.blocks:
                x = block.forward_plain(x)
            return T.layer_norm(x, self.final_gain, self.final_bias), None

        x_sem = sem.values
        if img_tokens.ndim == 3:
            x_sem = T.broadcast_to(x_sem, (img_tokens.shape[0],) + x_sem.shape)

        if mask.mode == MASK_ISOLATED:
            x_img = img_tokens
            for block in self.blocks:
                x_img, x_sem = block.forward_isolated(x_img, x_sem)
            img_out = T.layer_norm(x_img, self.final_gain, self.final_bias)
            sem_out = T.layer_norm(x_sem, self.final_gain, self.final_bias)
            return img_out, sem_out

        x = T.concat([img_tokens, x_sem], axis=-2)
        for block in self.blocks:
            x = block.forward_plain(x)  # full mode: every pair may attend
        x = T.layer_norm(x, self.final_gain, self.final_bias)
        return x[..., :m, :], x[..., m:, :]

    def image_state_stack(self, img_tokens):
        """Per-layer image-token input states plus the final image output,
        computed without graph construction. Valid as a training-time cache
        only while the encoder is frozen: under the isolated layout the image
        path never depends on the semantic tokens."""
        states = []
        with T.no_grad():
            x = img_tokens
            for block in self.blocks:
                states.append(x.data)
                x = block.forward_plain(x)
            img_out = T.layer_norm(x, self.final_gain, self.final_bias)
        return states, img_out.data

    def encode_sem_cached(self, states, sem, batch_shape=None):
        """Run only the semantic half of the isolated layout against cached
        per-layer image states (numpy arrays, possibly batched)."""
        x_sem = sem.values
        if batch_shape:
            x_sem = T.broadcast_to(x_sem, (batch_shape[0],) + x_sem.shape)
        for block, state in zip(self.blocks, states):
            x_sem = block.forward_isolated_sem(Tensor(state), x_sem)
        return T.layer_norm(x_sem, self.final_gain, self.final_bias)

    # -- persistence -------------------------------------------------------

    def save(self, directory, extra_tensors=None, extra_config=None, notes=()):
        tensors = {name: p.data for name, p in self.params.items()}
        if extra_tensors:
            tensors.update(extra_tensors)
        config = self.config.to_dict()
        if extra_config:
            config.update(extra_config)
        return save_checkpoint(directory, tensors, config=config, notes=notes)

    @classmethod
    def load(cls, directory):
        tensors, config, _ = load_checkpoint(directory)
        enc = cls.from_tensors(EncoderConfig.from_dict(config), tensors)
        return enc

    @classmethod
    def from_tensors(cls, config, tensors):
        dtype = next(iter(tensors.values())).dtype if tensors else np.float32
        enc = cls(config, rng=np.random.default_rng(0), dtype=dtype)
        own = enc.params
        for name, p in own.items():
            if name not in tensors:
                raise KeyError(f"checkpoint is missing tensor {name!r}")
            if tensors[name].shape != p.data.shape:
                raise ShapeError(f"tensor {name} shape {tensors[name].shape} != expected {p.data.shape}")
            p.data = np.ascontiguousarray(tensors[name].astype(enc.dtype, copy=False))
        return enc
