"""Tri-modal classifier: patch-token image encoder, vector MLPs, cross-attention fusion.

Everything is plain float64 NumPy. Each layer has a forward that returns a
cache and a backward that consumes it, so ``loss_and_grads`` gives exact
reverse-mode gradients for every parameter.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..errors import NonFinite, ShapeMismatch

LN_EPS = 1e-5
_GELU_K = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class FusionConfig:
    image_size: int = 64
    patch: int = 16
    d_model: int = 64
    n_heads: int = 4
    n_encoder_blocks: int = 2
    clinical_dim: int = 4
    values_dim: int = 8
    head_hidden: int = 64
    ff_mult: int = 2
    seed: int = 0
    use_image: bool = True
    use_clinical: bool = True
    use_values: bool = True
    # False: vector tokens query image tokens; True: image tokens query the vector token
    reverse_attention: bool = False

    def __post_init__(self):
        if self.image_size % self.patch:
            raise ValueError("image_size must be divisible by patch")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not (self.use_image or self.use_clinical or self.use_values):
            raise ValueError("at least one modality must be enabled")

    @property
    def n_tokens(self) -> int:
        return (self.image_size // self.patch) ** 2

    @property
    def n_parts(self) -> int:
        return int(self.use_image) + int(self.use_clinical) + int(self.use_values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FusionConfig":
        return cls(**d)

    def with_(self, **kw) -> "FusionConfig":
        return replace(self, **kw)


# --- parameter construction ---------------------------------------------------

def _dense(rng, fan_in, fan_out):
    return rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)


def _attn_params(rng, prefix, d):
    p = {}
    for k in ("q", "k", "v", "o"):
        p[f"{prefix}.W{k}"] = _dense(rng, d, d)
        p[f"{prefix}.b{k}"] = np.zeros(d)
    return p


def _mlp_params(rng, prefix, d_in, d_hidden, d_out):
    return {
        f"{prefix}.W1": _dense(rng, d_in, d_hidden),
        f"{prefix}.b1": np.zeros(d_hidden),
        f"{prefix}.W2": _dense(rng, d_hidden, d_out),
        f"{prefix}.b2": np.zeros(d_out),
    }


def init_params(cfg: FusionConfig, zero_classifier: bool = True) -> dict[str, np.ndarray]:
    """Seeded initial parameters. With ``zero_classifier`` the model starts at p = (0.5, 0.5)."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d_model
    p: dict[str, np.ndarray] = {}
    if cfg.use_image:
        p["patch_embed.W"] = _dense(rng, cfg.patch * cfg.patch, d)
        p["patch_embed.b"] = np.zeros(d)
        p["pos"] = 0.1 * rng.standard_normal((cfg.n_tokens, d))
        for i in range(cfg.n_encoder_blocks):
            b = f"enc{i}"
            p[f"{b}.ln1.g"] = np.ones(d)
            p[f"{b}.ln1.b"] = np.zeros(d)
            p.update(_attn_params(rng, f"{b}.attn", d))
            p[f"{b}.ln2.g"] = np.ones(d)
            p[f"{b}.ln2.b"] = np.zeros(d)
            p.update(_mlp_params(rng, f"{b}.ff", d, cfg.ff_mult * d, d))
    if cfg.use_clinical:
        p.update(_mlp_params(rng, "mlp_c", cfg.clinical_dim, d, d))
        if cfg.use_image:
            p.update(_attn_params(rng, "ca_c", d))
    if cfg.use_values:
        p.update(_mlp_params(rng, "mlp_v", cfg.values_dim, d, d))
        if cfg.use_image:
            p.update(_attn_params(rng, "ca_v", d))
    p.update(_mlp_params(rng, "head", cfg.n_parts * d, cfg.head_hidden, cfg.head_hidden))
    if zero_classifier:
        p["cls.W"] = np.zeros((cfg.head_hidden, 2))
    else:
        p["cls.W"] = _dense(rng, cfg.head_hidden, 2)
    p["cls.b"] = np.zeros(2)
    return p


# --- primitives -----------------------------------------------------------------

def gelu(x):
    t = np.tanh(_GELU_K * (x + 0.044715 * (x * x * x)))
    return 0.5 * x * (1.0 + t), t


def gelu_grad(x, t):
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_K * (1.0 + 3 * 0.044715 * x * x)


def softmax(s, axis=-1):
    s = s - s.max(axis=axis, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=axis, keepdims=True)


def _acc(grads, name, g):
    if name in grads:
        grads[name] = grads[name] + g
    else:
        grads[name] = g


def linear_fwd(x, W, b):
    return x @ W + b


def linear_bwd(dy, x, W, grads, wname, bname):
    _acc(grads, wname, x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1]))
    _acc(grads, bname, dy.reshape(-1, dy.shape[-1]).sum(axis=0))
    return dy @ W.T


def layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def layernorm_bwd(dy, cache, g, grads, gname, bname):
    xhat, inv = cache
    n = xhat.shape[-1]
    _acc(grads, gname, (dy * xhat).reshape(-1, n).sum(axis=0))
    _acc(grads, bname, dy.reshape(-1, n).sum(axis=0))
    dxhat = dy * g
    return inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))


def mlp_fwd(x, p, prefix):
    z = linear_fwd(x, p[f"{prefix}.W1"], p[f"{prefix}.b1"])
    h, t = gelu(z)
    out = linear_fwd(h, p[f"{prefix}.W2"], p[f"{prefix}.b2"])
    return out, (x, z, t, h)


def mlp_bwd(dout, cache, p, prefix, grads):
    x, z, t, h = cache
    dh = linear_bwd(dout, h, p[f"{prefix}.W2"], grads, f"{prefix}.W2", f"{prefix}.b2")
    dz = dh * gelu_grad(z, t)
    return linear_bwd(dz, x, p[f"{prefix}.W1"], grads, f"{prefix}.W1", f"{prefix}.b1")


def _split(x, h):
    B, N, D = x.shape
    return x.reshape(B, N, h, D // h).transpose(0, 2, 1, 3)


def _merge(x):
    B, h, N, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, N, h * dh)


def attention_fwd(xq, xkv, p, prefix, n_heads):
    """Multi-head attention of queries ``xq`` (B,Nq,D) over context ``xkv`` (B,Nk,D)."""
    Q = _split(linear_fwd(xq, p[f"{prefix}.Wq"], p[f"{prefix}.bq"]), n_heads)
    K = _split(linear_fwd(xkv, p[f"{prefix}.Wk"], p[f"{prefix}.bk"]), n_heads)
    V = _split(linear_fwd(xkv, p[f"{prefix}.Wv"], p[f"{prefix}.bv"]), n_heads)
    scale = 1.0 / math.sqrt(Q.shape[-1])
    A = softmax(Q @ K.transpose(0, 1, 3, 2) * scale)
    O = A @ V
    Om = _merge(O)
    out = linear_fwd(Om, p[f"{prefix}.Wo"], p[f"{prefix}.bo"])
    return out, dict(xq=xq, xkv=xkv, Q=Q, K=K, V=V, A=A, O=O, Om=Om, scale=scale)


def attention_bwd(dout, c, p, prefix, grads):
    h = c["Q"].shape[1]
    dOm = linear_bwd(dout, c["Om"], p[f"{prefix}.Wo"], grads, f"{prefix}.Wo", f"{prefix}.bo")
    dO = _split(dOm, h)
    A = c["A"]
    dA = dO @ c["V"].transpose(0, 1, 3, 2)
    dV = A.transpose(0, 1, 3, 2) @ dO
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * c["scale"]
    dQ = dS @ c["K"]
    dK = dS.transpose(0, 1, 3, 2) @ c["Q"]
    dxq = linear_bwd(_merge(dQ), c["xq"], p[f"{prefix}.Wq"], grads, f"{prefix}.Wq", f"{prefix}.bq")
    dxkv = linear_bwd(_merge(dK), c["xkv"], p[f"{prefix}.Wk"], grads, f"{prefix}.Wk", f"{prefix}.bk")
    dxkv = dxkv + linear_bwd(_merge(dV), c["xkv"], p[f"{prefix}.Wv"], grads, f"{prefix}.Wv", f"{prefix}.bv")
    return dxq, dxkv


# --- image encoder ------------------------------------------------------------------

def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """(B, H, W) -> (B, n_patches, patch*patch), patches in row-major order."""
    B, H, W = images.shape
    g_h, g_w = H // patch, W // patch
    x = images.reshape(B, g_h, patch, g_w, patch).transpose(0, 1, 3, 2, 4)
    return x.reshape(B, g_h * g_w, patch * patch)


def embed_patches(images, p, cfg):
    return linear_fwd(patchify(images, cfg.patch), p["patch_embed.W"], p["patch_embed.b"]) + p["pos"]


def _encoder_block_fwd(x, p, b, n_heads):
    a, ln1 = layernorm_fwd(x, p[f"{b}.ln1.g"], p[f"{b}.ln1.b"])
    att, att_c = attention_fwd(a, a, p, f"{b}.attn", n_heads)
    hid = x + att
    c, ln2 = layernorm_fwd(hid, p[f"{b}.ln2.g"], p[f"{b}.ln2.b"])
    ff, ff_c = mlp_fwd(c, p, f"{b}.ff")
    return hid + ff, (ln1, att_c, ln2, ff_c)


def _encoder_block_bwd(dy, cache, p, b, grads):
    ln1, att_c, ln2, ff_c = cache
    dc = mlp_bwd(dy, ff_c, p, f"{b}.ff", grads)
    dhid = dy + layernorm_bwd(dc, ln2, p[f"{b}.ln2.g"], grads, f"{b}.ln2.g", f"{b}.ln2.b")
    dq, dkv = attention_bwd(dhid, att_c, p, f"{b}.attn", grads)
    return dhid + layernorm_bwd(dq + dkv, ln1, p[f"{b}.ln1.g"], grads, f"{b}.ln1.g", f"{b}.ln1.b")


def _check_images(images, cfg):
    images = np.asarray(images, dtype=float)
    if images.ndim == 2:
        images = images[None]
    if images.shape[1:] != (cfg.image_size, cfg.image_size):
        raise ShapeMismatch(f"expected {cfg.image_size}x{cfg.image_size} images, got {images.shape[1:]}")
    return images


def _encode_image(images, p, cfg):
    images = _check_images(images, cfg)
    x = embed_patches(images, p, cfg)
    caches = []
    for i in range(cfg.n_encoder_blocks):
        x, c = _encoder_block_fwd(x, p, f"enc{i}", cfg.n_heads)
        caches.append(c)
    return x, (images, caches)


def encode_image(images, p, cfg) -> np.ndarray:
    """Token sequence F_i of shape (B, n_tokens, d_model) (or (n_tokens, d_model) for one image)."""
    single = np.asarray(images).ndim == 2
    x, _ = _encode_image(images, p, cfg)
    return x[0] if single else x


def _encode_image_bwd(dx, cache, p, cfg, grads):
    images, caches = cache
    for i in reversed(range(cfg.n_encoder_blocks)):
        dx = _encoder_block_bwd(dx, caches[i], p, f"enc{i}", grads)
    _acc(grads, "pos", dx.sum(axis=0))
    linear_bwd(dx, patchify(images, cfg.patch), p["patch_embed.W"], grads, "patch_embed.W", "patch_embed.b")


def encode_vector(v, p, prefix, width=None) -> np.ndarray:
    """Map a (B, width) vector batch to one d_model token per sample."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[None]
    if width is not None and v.shape[1] != width:
        raise ShapeMismatch(f"{prefix}: expected width {width}, got {v.shape[1]}")
    return mlp_fwd(v, p, prefix)[0]


def cross_attend(query, context, p, prefix, n_heads):
    """Residual cross-attention ``query + MHA(query, context)``; returns (fused, attention weights)."""
    query = np.asarray(query, dtype=float)
    context = np.asarray(context, dtype=float)
    if query.shape[-1] != context.shape[-1]:
        raise ShapeMismatch("query and context widths differ")
    out, c = attention_fwd(query, context, p, prefix, n_heads)
    return query + out, c["A"]


# --- full model -------------------------------------------------------------------

@dataclass
class Batch:
    images: np.ndarray | None
    v_c: np.ndarray | None
    v_v: np.ndarray | None
    y: np.ndarray | None = None  # 1 = Superior

    def __len__(self):
        for a in (self.images, self.v_c, self.v_v, self.y):
            if a is not None:
                return len(a)
        return 0


def _forward(batch: Batch, p, cfg):
    caches = {}
    parts = []
    F_i = None
    if cfg.use_image:
        F_i, caches["img"] = _encode_image(batch.images, p, cfg)
        parts.append(F_i.mean(axis=1))
    for name, vec, width in (("c", batch.v_c, cfg.clinical_dim), ("v", batch.v_v, cfg.values_dim)):
        if not getattr(cfg, "use_clinical" if name == "c" else "use_values"):
            continue
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 2 or vec.shape[1] != width:
            raise ShapeMismatch(f"mlp_{name}: expected (B, {width}) input, got {vec.shape}")
        tok, caches[f"mlp_{name}"] = mlp_fwd(vec, p, f"mlp_{name}")
        tok = tok[:, None, :]
        if cfg.use_image:
            if cfg.reverse_attention:
                out, caches[f"ca_{name}"] = attention_fwd(F_i, tok, p, f"ca_{name}", cfg.n_heads)
                parts.append((F_i + out).mean(axis=1))
            else:
                out, caches[f"ca_{name}"] = attention_fwd(tok, F_i, p, f"ca_{name}", cfg.n_heads)
                parts.append((tok + out)[:, 0])
        else:
            parts.append(tok[:, 0])
    z = np.concatenate(parts, axis=-1)
    a1 = linear_fwd(z, p["head.W1"], p["head.b1"])
    h1, t1 = gelu(a1)
    a2 = linear_fwd(h1, p["head.W2"], p["head.b2"])
    h2, t2 = gelu(a2)
    logits = linear_fwd(h2, p["cls.W"], p["cls.b"])
    probs = softmax(logits)
    caches["head"] = (z, a1, t1, h1, a2, t2, h2)
    caches["F_i"] = F_i
    return probs, caches


def forward(batch: Batch, p, cfg) -> np.ndarray:
    """Class probabilities, shape (B, 2): column 0 = Superior, column 1 = NotSuperior."""
    probs, _ = _forward(batch, p, cfg)
    return probs[:, ::-1].copy()


def loss_and_grads(batch: Batch, p, cfg) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its exact gradient for every parameter."""
    B = len(batch)
    if B == 0:
        raise ValueError("empty batch")
    y = np.asarray(batch.y, dtype=int)
    probs, caches = _forward(batch, p, cfg)
    loss = float(-np.mean(np.log(probs[np.arange(B), y])))

    grads: dict[str, np.ndarray] = {}
    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    z, a1, t1, h1, a2, t2, h2 = caches["head"]
    dh2 = linear_bwd(dlogits, h2, p["cls.W"], grads, "cls.W", "cls.b")
    dh1 = linear_bwd(dh2 * gelu_grad(a2, t2), h1, p["head.W2"], grads, "head.W2", "head.b2")
    dz = linear_bwd(dh1 * gelu_grad(a1, t1), z, p["head.W1"], grads, "head.W1", "head.b1")

    d = cfg.d_model
    F_i = caches["F_i"]
    dF_i = None
    k = 0
    if cfg.use_image:
        dF_i = np.repeat(dz[:, None, k:k + d] / F_i.shape[1], F_i.shape[1], axis=1)
        k += d
    for name in ("c", "v"):
        if not getattr(cfg, "use_clinical" if name == "c" else "use_values"):
            continue
        dpart = dz[:, k:k + d]
        k += d
        if cfg.use_image:
            n_tok = F_i.shape[1]
            if cfg.reverse_attention:
                dfused = np.repeat(dpart[:, None, :] / n_tok, n_tok, axis=1)
                dq, dkv = attention_bwd(dfused, caches[f"ca_{name}"], p, f"ca_{name}", grads)
                dF_i = dF_i + dfused + dq
                dtok = dkv[:, 0]
            else:
                dfused = dpart[:, None, :]
                dq, dkv = attention_bwd(dfused, caches[f"ca_{name}"], p, f"ca_{name}", grads)
                dF_i = dF_i + dkv
                dtok = (dfused + dq)[:, 0]
        else:
            dtok = dpart
        mlp_bwd(dtok, caches[f"mlp_{name}"], p, f"mlp_{name}", grads)
    if cfg.use_image:
        _encode_image_bwd(dF_i, caches["img"], p, cfg, grads)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFinite(name)
    for name in p:
        grads.setdefault(name, np.zeros_like(p[name]))
    return loss, grads


def loss_only(batch: Batch, p, cfg) -> float:
    B = len(batch)
    probs, _ = _forward(batch, p, cfg)
    y = np.asarray(batch.y, dtype=int)
    return float(-np.mean(np.log(probs[np.arange(B), y])))
