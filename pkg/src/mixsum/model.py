"""Unified transformer encoder-decoder shared by every task.

Pre-norm layers, sinusoidal positions, relu feed-forward, and a single
embedding matrix used three ways: encoder input, decoder input and the
output projection. Forward passes build an autodiff graph only when the
parameter tensors require gradients, so inference stays lean.

Checkpoints are a one-line JSON header (config, tensor manifest, payload
checksum) followed by raw little-endian tensor bytes in manifest order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

NEG_BIAS = -1e30  # additive attention mask for disallowed key positions


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    num_heads: int
    d_model: int
    d_ff: int
    dropout_p: float
    vocab_size: int
    max_positions: int = 512

    def __post_init__(self):
        if min(self.num_layers, self.num_heads, self.d_model, self.d_ff,
               self.vocab_size, self.max_positions) <= 0:
            raise ValueError("all size fields must be positive")
        if self.d_model % self.num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")


def paper_scale_config() -> ModelConfig:
    """The full-scale architecture: 6 layers, 8 heads, 512/2048, vocab 33k."""
    return ModelConfig(num_layers=6, num_heads=8, d_model=512, d_ff=2048,
                       dropout_p=0.1, vocab_size=33_000, max_positions=512)


def desk_scale_config(vocab_size: int, max_positions: int = 256) -> ModelConfig:
    """Laptop-sized default used by the experiment pipelines."""
    return ModelConfig(num_layers=2, num_heads=4, d_model=128, d_ff=512,
                       dropout_p=0.1, vocab_size=vocab_size,
                       max_positions=max_positions)


def _attn_shapes(prefix: str, d: int) -> list[tuple[str, tuple]]:
    out = []
    for name in ("wq", "wk", "wv", "wo"):
        out.append((f"{prefix}.{name}", (d, d)))
    for name in ("bq", "bk", "bv", "bo"):
        out.append((f"{prefix}.{name}", (d,)))
    return out


def _ln_shapes(prefix: str, d: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.g", (d,)), (f"{prefix}.b", (d,))]


def _ffn_shapes(prefix: str, d: int, d_ff: int) -> list[tuple[str, tuple]]:
    return [(f"{prefix}.w1", (d, d_ff)), (f"{prefix}.b1", (d_ff,)),
            (f"{prefix}.w2", (d_ff, d)), (f"{prefix}.b2", (d,))]


def param_shapes(config: ModelConfig) -> dict[str, tuple]:
    """Canonical name -> shape map; iteration order is the checkpoint order."""
    d, d_ff = config.d_model, config.d_ff
    shapes: list[tuple[str, tuple]] = [("embed", (config.vocab_size, d))]
    for l in range(config.num_layers):
        shapes += _ln_shapes(f"enc{l}.ln1", d)
        shapes += _attn_shapes(f"enc{l}.attn", d)
        shapes += _ln_shapes(f"enc{l}.ln2", d)
        shapes += _ffn_shapes(f"enc{l}.ffn", d, d_ff)
    shapes += _ln_shapes("enc.lnf", d)
    for l in range(config.num_layers):
        shapes += _ln_shapes(f"dec{l}.ln1", d)
        shapes += _attn_shapes(f"dec{l}.self", d)
        shapes += _ln_shapes(f"dec{l}.ln2", d)
        shapes += _attn_shapes(f"dec{l}.cross", d)
        shapes += _ln_shapes(f"dec{l}.ln3", d)
        shapes += _ffn_shapes(f"dec{l}.ffn", d, d_ff)
    shapes += _ln_shapes("dec.lnf", d)
    return dict(shapes)


def count_params(config: ModelConfig) -> int:
    """Closed-form parameter count under three-way embedding tying."""
    d, d_ff = config.d_model, config.d_ff
    attn = 4 * (d * d + d)
    ffn = d * d_ff + d_ff + d_ff * d + d
    ln = 2 * d
    enc_layer = attn + ffn + 2 * ln
    dec_layer = 2 * attn + ffn + 3 * ln
    return (config.vocab_size * d
            + config.num_layers * (enc_layer + dec_layer)
            + 2 * ln)


class ModelParams:
    """Dense parameter tensors keyed by canonical names."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        expected = param_shapes(config)
        if set(tensors) != set(expected):
            missing = set(expected) - set(tensors)
            extra = set(tensors) - set(expected)
            raise ValueError(f"tensor set mismatch (missing={missing}, extra={extra})")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {tensors[name].shape} != {shape}")
        self.config = config
        self.tensors = tensors

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def init_params(config: ModelConfig, rng: np.random.Generator,
                dtype=np.float64) -> ModelParams:
    """Zero-mean normal matrices with std 1/sqrt(fan_in); biases zero,
    norm gains one. fan_in is the contraction dimension of x @ W; the
    embedding uses d_model, its fan-in as the output projection."""
    tensors = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if name == "embed":
            tensors[name] = rng.normal(0.0, config.d_model ** -0.5, shape).astype(dtype)
        elif leaf.startswith("w"):
            tensors[name] = rng.normal(0.0, shape[0] ** -0.5, shape).astype(dtype)
        elif leaf == "g":
            tensors[name] = np.ones(shape, dtype=dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    return ModelParams(config, tensors)


@lru_cache(maxsize=8)
def _positional_encoding(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(0, d, 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10_000.0, i / d)
    pe = np.zeros((max_len, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d // 2])
    return pe


def build_param_tensors(params: ModelParams, requires_grad: bool) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad)
            for k, v in params.tensors.items()}


def _maybe_dropout(x: Tensor, p: float, train: bool, rng) -> Tensor:
    if not train or p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, mask)


def _multihead(pt, prefix: str, q_in: Tensor, kv_in: Tensor, bias: np.ndarray,
               num_heads: int) -> Tensor:
    bsz, t_q, d = q_in.shape
    t_k = kv_in.shape[1]
    dh = d // num_heads

    def project(x, w, b, t):
        h = ad.linear(x, pt[f"{prefix}.{w}"], pt[f"{prefix}.{b}"])
        return ad.swapaxes(ad.reshape(h, (bsz, t, num_heads, dh)), 1, 2)

    q = project(q_in, "wq", "bq", t_q)
    k = project(kv_in, "wk", "bk", t_k)
    v = project(kv_in, "wv", "bv", t_k)
    scores = ad.scale(ad.matmul(q, ad.swapaxes(k, -1, -2)), dh ** -0.5)
    probs = ad.softmax(ad.add(scores, bias), axis=-1)
    ctx = ad.reshape(ad.swapaxes(ad.matmul(probs, v), 1, 2), (bsz, t_q, d))
    return ad.linear(ctx, pt[f"{prefix}.wo"], pt[f"{prefix}.bo"])


def _embed(pt, ids: np.ndarray, config: ModelConfig, train: bool, rng) -> Tensor:
    x = ad.scale(ad.embedding(pt["embed"], ids), config.d_model ** 0.5)
    pe = _positional_encoding(config.max_positions, config.d_model)[: ids.shape[1]]
    return _maybe_dropout(ad.add(x, pe), config.dropout_p, train, rng)


def _sublayer(pt, x: Tensor, ln: str, fn, p: float, train: bool, rng) -> Tensor:
    normed = ad.layer_norm(x, pt[f"{ln}.g"], pt[f"{ln}.b"])
    return ad.add(x, _maybe_dropout(fn(normed), p, train, rng))


def encode_stack(pt, config: ModelConfig, x: Tensor, src_bias: np.ndarray,
                 train: bool = False, rng=None) -> Tensor:
    p = config.dropout_p
    for l in range(config.num_layers):
        x = _sublayer(pt, x, f"enc{l}.ln1",
                      lambda h, l=l: _multihead(pt, f"enc{l}.attn", h, h,
                                                src_bias, config.num_heads),
                      p, train, rng)
        x = _sublayer(pt, x, f"enc{l}.ln2",
                      lambda h, l=l: _ffn(pt, f"enc{l}.ffn", h), p, train, rng)
    return ad.layer_norm(x, pt["enc.lnf.g"], pt["enc.lnf.b"])


def _ffn(pt, prefix: str, x: Tensor) -> Tensor:
    h = ad.relu(ad.linear(x, pt[f"{prefix}.w1"], pt[f"{prefix}.b1"]))
    return ad.linear(h, pt[f"{prefix}.w2"], pt[f"{prefix}.b2"])


def decode_stack(pt, config: ModelConfig, y: Tensor, enc_out: Tensor,
                 causal_bias: np.ndarray, cross_bias: np.ndarray,
                 train: bool = False, rng=None) -> Tensor:
    p = config.dropout_p
    for l in range(config.num_layers):
        y = _sublayer(pt, y, f"dec{l}.ln1",
                      lambda h, l=l: _multihead(pt, f"dec{l}.self", h, h,
                                                causal_bias, config.num_heads),
                      p, train, rng)
        y = _sublayer(pt, y, f"dec{l}.ln2",
                      lambda h, l=l: _multihead(pt, f"dec{l}.cross", h, enc_out,
                                                cross_bias, config.num_heads),
                      p, train, rng)
        y = _sublayer(pt, y, f"dec{l}.ln3",
                      lambda h, l=l: _ffn(pt, f"dec{l}.ffn", h), p, train, rng)
    return ad.layer_norm(y, pt["dec.lnf.g"], pt["dec.lnf.b"])


def output_logits(h: Tensor, embed: Tensor) -> Tensor:
    return ad.tied_logits(h, embed)


def causal_bias(t: int) -> np.ndarray:
    bias = np.triu(np.full((t, t), NEG_BIAS), k=1)
    return bias[None, None, :, :]


def padding_bias(ids: np.ndarray, pad_id: int | None) -> np.ndarray:
    bsz, t = ids.shape
    if pad_id is None:
        return np.zeros((bsz, 1, 1, t))
    return np.where(ids == pad_id, NEG_BIAS, 0.0)[:, None, None, :]


def _check_ids(ids: np.ndarray, config: ModelConfig, what: str) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.ndim != 2:
        raise ValueError(f"{what} must be a (batch, length) array")
    if ids.shape[1] > config.max_positions:
        raise ValueError(f"{what} length {ids.shape[1]} exceeds "
                         f"max_positions {config.max_positions}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValueError(f"{what} contains ids outside [0, {config.vocab_size})")
    return ids


def forward_graph(pt, config: ModelConfig, src_ids: np.ndarray,
                  dec_input: np.ndarray, pad_id: int | None = None,
                  train_mode: bool = False, rng=None) -> Tensor:
    """Full graph from ids to logits; pt maps names to Tensors (tied or not)."""
    src_ids = _check_ids(src_ids, config, "src_ids")
    dec_input = _check_ids(dec_input, config, "decoder_input")
    src_bias = padding_bias(src_ids, pad_id)
    enc = encode_stack(pt, config, _embed(pt, src_ids, config, train_mode, rng),
                       src_bias, train_mode, rng)
    self_bias = causal_bias(dec_input.shape[1])
    dec = decode_stack(pt, config, _embed(pt, dec_input, config, train_mode, rng),
                       enc, self_bias, src_bias, train_mode, rng)
    return output_logits(dec, pt["embed"])


def forward(params: ModelParams, src_ids: np.ndarray, dec_input: np.ndarray,
            pad_id: int | None = None, train_mode: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Logits (batch, tgt_len, vocab). Dropout fires only in train mode,
    which then requires an rng."""
    if train_mode and params.config.dropout_p > 0 and rng is None:
        raise ValueError("train_mode forward needs an rng for dropout")
    pt = build_param_tensors(params, requires_grad=False)
    logits = forward_graph(pt, params.config, src_ids, dec_input, pad_id,
                           train_mode, rng)
    if not np.isfinite(logits.data).all():
        raise FloatingPointError("forward produced non-finite logits")
    return logits.data


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path) -> None:
    manifest, blobs, offset = [], [], 0
    for name in param_shapes(params.config):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        raw = arr.tobytes()
        manifest.append({"name": name, "dtype": "<f8",
                         "shape": list(arr.shape),
                         "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    payload = b"".join(blobs)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "tensors": manifest,
        "checksum": "sha256:" + hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(payload)


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        payload = f.read()
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('format_version')!r}")
    digest = "sha256:" + hashlib.sha256(payload).hexdigest()
    if digest != header["checksum"]:
        raise ValueError("checkpoint payload failed its checksum")
    config = ModelConfig(**header["config"])
    expected = param_shapes(config)
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise ValueError(f"tensor {entry['name']} shape {shape} does not "
                             f"match the config")
        raw = payload[entry["offset"]: entry["offset"] + entry["nbytes"]]
        tensors[entry["name"]] = np.frombuffer(raw, dtype=entry["dtype"]).reshape(shape).copy()
    return ModelParams(config, tensors)
