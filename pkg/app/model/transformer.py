"""Audio-to-text transformer: frozen frame encoder, learnable projection,
frozen causal decoder with a learnable cross-attention sublayer after every
self-attention.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigError, DimensionError, LengthError
from ..numerics.ops import embedding
from ..numerics.tensor import Tensor, no_grad
from ..schemas import AudioFeatures, ModelConfig
from ..utils.seeding import rng_for
from . import layers

logger = logging.getLogger(__name__)

BOS_ID = 1


def validate_model_config(config: ModelConfig) -> None:
    for field in ("d_audio", "d_text", "n_blocks", "n_heads", "vocab_size_text",
                  "max_audio_frames", "max_text_len", "encoder_blocks", "encoder_heads", "mlp_ratio"):
        if getattr(config, field) <= 0:
            raise ConfigError(field, "must be positive")
    if config.d_text % config.n_heads:
        raise ConfigError("n_heads", f"d_text={config.d_text} not divisible by n_heads={config.n_heads}")
    if config.d_audio % config.encoder_heads:
        raise ConfigError("encoder_heads", f"d_audio={config.d_audio} not divisible by encoder_heads={config.encoder_heads}")
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError("dropout", "must be in [0, 1)")
    if config.ln_eps <= 0:
        raise ConfigError("ln_eps", "must be positive")


def is_learnable_name(name: str) -> bool:
    """Projection and every cross-attention parameter; nothing else."""
    return name.startswith("proj.") or ".xattn." in name


@dataclass(frozen=True)
class ParameterPartition:
    frozen: FrozenSet[str]
    learnable: FrozenSet[str]
    total: int
    learnable_count: int

    @property
    def fraction(self) -> float:
        return self.learnable_count / self.total if self.total else 0.0


class AudioToTextModel:
    def __init__(self, config: ModelConfig, params: Dict[str, Tensor], learnable: Optional[Iterable[str]] = None) -> None:
        self.config = config
        self.params = params
        names = set(learnable) if learnable is not None else {n for n in params if is_learnable_name(n)}
        unknown = names - set(params)
        if unknown:
            raise ConfigError("learnable", f"unknown parameters: {sorted(unknown)}")
        self.set_learnable(names)

    # -- partition --------------------------------------------------------
    def set_learnable(self, names: Iterable[str]) -> None:
        names = set(names)
        for name, p in self.params.items():
            p.requires_grad = name in names
            p.zero_grad()

    @property
    def partition(self) -> ParameterPartition:
        learnable = frozenset(n for n, p in self.params.items() if p.requires_grad)
        frozen = frozenset(self.params) - learnable
        total = sum(p.data.size for p in self.params.values())
        count = sum(self.params[n].data.size for n in learnable)
        return ParameterPartition(frozen=frozen, learnable=learnable, total=total, learnable_count=count)

    def learnable_parameters(self) -> Dict[str, Tensor]:
        return {n: p for n, p in self.params.items() if p.requires_grad}

    def snapshot(self, names: Optional[Iterable[str]] = None) -> Dict[str, np.ndarray]:
        keys = list(names) if names is not None else list(self.params)
        return {n: self.params[n].data.copy() for n in keys}

    def load_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, arr in arrays.items():
            target = self.params[name]
            if target.data.shape != arr.shape:
                raise DimensionError(f"{name}: shape {arr.shape} != {target.data.shape}")
            target.data = np.array(arr, dtype=np.float64, copy=True)

    # -- encoder ----------------------------------------------------------
    def _encoder_hidden(self, frames: Tensor, valid: np.ndarray) -> Tensor:
        cfg = self.config
        p = self.params
        h = layers.linear(frames, p, "enc.in")
        if cfg.encoder_positional:
            h = h + p["enc.pos"][: frames.shape[1]]
        mask = layers.key_padding_mask(valid)
        for i in range(cfg.encoder_blocks):
            pre = f"enc.blocks.{i}"
            x = layers.norm(h, p, f"{pre}.ln1", cfg.ln_eps)
            h = h + layers.attention(x, x, p, f"{pre}.attn", cfg.encoder_heads, mask)
            h = h + layers.mlp(layers.norm(h, p, f"{pre}.ln2", cfg.ln_eps), p, f"{pre}.mlp")
        return layers.norm(h, p, "enc.ln_f", cfg.ln_eps)

    def encode_tensor(self, frames: np.ndarray, valid: np.ndarray, mask_frames: Optional[np.ndarray] = None) -> Tensor:
        """Tracked encoder pass (pretraining); ``mask_frames`` swaps frames for the mask embedding."""
        x = Tensor(frames)
        if mask_frames is not None:
            m = mask_frames[..., None].astype(np.float64)
            x = x * (1.0 - m) + self.params["enc.mask_emb"] * m
        return self._encoder_hidden(x, valid)

    def encode_batch(self, frames_list: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        """Pad and encode a batch; returns (B×T×d_audio outputs, B×T validity)."""
        batch, valid = pad_frames(frames_list, self.config)
        with no_grad():
            out = self._encoder_hidden(Tensor(batch), valid)
        return out.data * valid[..., None], valid

    def encode(self, frames: np.ndarray) -> np.ndarray:
        out, _ = self.encode_batch([frames])
        return out[0]

    # -- decoder ----------------------------------------------------------
    def project(self, encoded: np.ndarray) -> Tensor:
        return layers.linear(Tensor(encoded), self.params, "proj")

    def decode_logits(self, tokens: np.ndarray, memory: Optional[Tensor] = None,
                      memory_valid: Optional[np.ndarray] = None, training: bool = False,
                      rng: Optional[np.random.Generator] = None) -> Tensor:
        """B×L token ids -> B×L×V logits. ``memory`` is projected audio (B×T×d_text);
        without it the cross-attention sublayers are skipped (the frozen LM)."""
        cfg = self.config
        p = self.params
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.ndim != 2:
            raise DimensionError(f"expected B×L token ids, got shape {ids.shape}")
        length = ids.shape[1]
        if length == 0 or length > cfg.max_text_len:
            raise LengthError(f"prefix length {length} outside 1..{cfg.max_text_len}")
        h = embedding(p["dec.tok_emb"], ids) + p["dec.pos_emb"][:length]
        self_mask = layers.causal_mask(length)
        mem_mask = None
        if memory is not None and memory_valid is not None:
            mem_mask = layers.key_padding_mask(memory_valid)
        rate = cfg.dropout
        for i in range(cfg.n_blocks):
            pre = f"dec.blocks.{i}"
            x = layers.norm(h, p, f"{pre}.ln1", cfg.ln_eps)
            h = layers.residual(h, layers.attention(x, x, p, f"{pre}.attn", cfg.n_heads, self_mask), rate, rng, training)
            if memory is not None:
                q = layers.norm(h, p, f"{pre}.xattn.ln", cfg.ln_eps)
                h = layers.residual(h, layers.attention(q, memory, p, f"{pre}.xattn", cfg.n_heads, mem_mask),
                                    rate, rng, training)
            h = layers.residual(h, layers.mlp(layers.norm(h, p, f"{pre}.ln2", cfg.ln_eps), p, f"{pre}.mlp"),
                                rate, rng, training)
        h = layers.norm(h, p, "dec.ln_f", cfg.ln_eps)
        return h @ p["dec.tok_emb"].transpose()

    def lm_logits(self, prefix: Sequence[int]) -> np.ndarray:
        """Unconditional (frozen LM) logits for a prefix that already starts with BOS."""
        with no_grad():
            return self.decode_logits(np.asarray([list(prefix)]))[0].data


def build_model(config: ModelConfig, seed: int) -> AudioToTextModel:
    validate_model_config(config)
    rng = rng_for(seed, "build_model")
    std = config.init_std
    p: Dict[str, Tensor] = {}
    da, dt = config.d_audio, config.d_text

    layers.init_linear(p, "enc.in", da, da, rng, std)
    p["enc.pos"] = Tensor(rng.normal(0.0, std, size=(config.max_audio_frames, da)))
    p["enc.mask_emb"] = Tensor(rng.normal(0.0, std, size=(da,)))
    for i in range(config.encoder_blocks):
        pre = f"enc.blocks.{i}"
        layers.init_norm(p, f"{pre}.ln1", da)
        layers.init_attention(p, f"{pre}.attn", da, rng, std)
        layers.init_norm(p, f"{pre}.ln2", da)
        layers.init_mlp(p, f"{pre}.mlp", da, config.mlp_ratio, rng, std)
    layers.init_norm(p, "enc.ln_f", da)
    layers.init_linear(p, "enc.recon", da, da, rng, std)

    layers.init_linear(p, "proj", da, dt, rng, std)

    p["dec.tok_emb"] = Tensor(rng.normal(0.0, std, size=(config.vocab_size_text, dt)))
    p["dec.pos_emb"] = Tensor(rng.normal(0.0, std, size=(config.max_text_len, dt)))
    for i in range(config.n_blocks):
        pre = f"dec.blocks.{i}"
        layers.init_norm(p, f"{pre}.ln1", dt)
        layers.init_attention(p, f"{pre}.attn", dt, rng, std)
        layers.init_norm(p, f"{pre}.xattn.ln", dt)
        layers.init_attention(p, f"{pre}.xattn", dt, rng, std, zero_out=True)
        layers.init_norm(p, f"{pre}.ln2", dt)
        layers.init_mlp(p, f"{pre}.mlp", dt, config.mlp_ratio, rng, std)
    layers.init_norm(p, "dec.ln_f", dt)

    model = AudioToTextModel(config, p)
    part = model.partition
    logger.info("build_model seed=%d total=%d learnable=%d fraction=%.4f",
                seed, part.total, part.learnable_count, part.fraction)
    return model


def pad_frames(frames_list: Sequence[np.ndarray], config: ModelConfig) -> Tuple[np.ndarray, np.ndarray]:
    if not frames_list:
        raise DimensionError("empty audio batch")
    lengths = []
    for f in frames_list:
        if f.ndim != 2 or f.shape[1] != config.d_audio:
            raise DimensionError(f"audio frames must be T×{config.d_audio}, got {f.shape}")
        if f.shape[0] == 0 or f.shape[0] > config.max_audio_frames:
            raise LengthError(f"audio length {f.shape[0]} outside 1..{config.max_audio_frames}")
        lengths.append(f.shape[0])
    t_max = max(lengths)
    batch = np.zeros((len(frames_list), t_max, config.d_audio))
    valid = np.zeros((len(frames_list), t_max), dtype=bool)
    for i, f in enumerate(frames_list):
        batch[i, : f.shape[0]] = f
        valid[i, : f.shape[0]] = True
    return batch, valid


def forward(model: AudioToTextModel, audio: Union[AudioFeatures, np.ndarray], prefix: Sequence[int]) -> Tensor:
    """Logits L×V for ``prefix`` conditioned on one utterance's frames."""
    frames = audio.frames if isinstance(audio, AudioFeatures) else np.asarray(audio, dtype=np.float64)
    if len(prefix) > model.config.max_text_len:
        raise LengthError(f"prefix length {len(prefix)} exceeds max_text_len={model.config.max_text_len}")
    encoded, valid = model.encode_batch([frames])
    memory = model.project(encoded)
    return model.decode_logits(np.asarray([list(prefix)]), memory, valid)[0]


def count_parameters(model: AudioToTextModel) -> Tuple[int, int, float]:
    part = model.partition
    return part.total, part.learnable_count, part.fraction


def learnable_count_formula(d_audio: int, d_text: int, n_blocks: int) -> int:
    """Closed-form learnable count: projection plus, per block, four d×d
    attention matrices with biases and one layer norm."""
    per_block = 4 * (d_text * d_text + d_text) + 2 * d_text
    return n_blocks * per_block + d_audio * d_text + d_text

