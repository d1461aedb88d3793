"""Audio and text encoder towers, the fusion head, and the combined model.

Variable-length batches are handled so that a sample's embedding does not
depend on how much batch padding sits after it: every conv layer zeroes
positions past the valid length, attention uses key padding masks, and
pooling averages over valid positions only.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import RunConfig
from .errors import DataError
from .textproc import PAD_ID


def conv_output_length(length: int, kernel: int, stride: int,
                       padding: int) -> int:
    """Output length of a 1-D convolution: floor((L + 2p - k) / s) + 1."""
    return (length + 2 * padding - kernel) // stride + 1


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, hidden: int, heads: int, ff: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden)
        self.attn = nn.MultiheadAttention(hidden, heads, dropout=dropout,
                                          batch_first=True)
        self.norm2 = nn.LayerNorm(hidden)
        self.ff = nn.Sequential(nn.Linear(hidden, ff), nn.GELU(),
                                nn.Linear(ff, hidden))
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor,
                pad_mask: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn, _ = self.attn(h, h, h, key_padding_mask=pad_mask,
                            need_weights=False)
        x = x + self.drop(attn)
        x = x + self.drop(self.ff(self.norm2(x)))
        return x


def masked_mean(x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
    """Mean over non-padded positions; x (B, T, H), pad_mask (B, T) True at
    padding."""
    keep = (~pad_mask).to(x.dtype).unsqueeze(-1)
    total = (x * keep).sum(dim=1)
    count = keep.sum(dim=1).clamp(min=1.0)
    return total / count


class AudioEncoder(nn.Module):
    """Strided conv stack over log-mel frames, then a small transformer."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        convs, norms = [], []
        in_ch = cfg.n_mels
        for out_ch, k, s in zip(cfg.conv_channels, cfg.conv_kernels,
                                cfg.conv_strides):
            convs.append(nn.Conv1d(in_ch, out_ch, k, stride=s, padding=k // 2))
            norms.append(nn.LayerNorm(out_ch))
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)
        self.proj = nn.Linear(in_ch, cfg.tf_hidden)
        self.pos_emb = nn.Parameter(
            torch.randn(cfg.max_positions, cfg.tf_hidden) * 0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.tf_hidden, cfg.tf_heads, cfg.tf_ff,
                             cfg.dropout)
            for _ in range(cfg.tf_layers))
        self.final_norm = nn.LayerNorm(cfg.tf_hidden)
        self.head = nn.Linear(cfg.tf_hidden, cfg.embed_dim)

    def output_frames(self, frames: int) -> int:
        for k, s in zip(self.cfg.conv_kernels, self.cfg.conv_strides):
            frames = conv_output_length(frames, k, s, k // 2)
        return frames

    def forward(self, mel: torch.Tensor,
                valid_frames: torch.Tensor) -> torch.Tensor:
        """mel (B, T, n_mels), valid_frames (B,) -> unit embeddings (B, D)."""
        if mel.dim() != 3 or mel.shape[2] != self.cfg.n_mels:
            raise DataError(f"expected mel of shape (B, T, {self.cfg.n_mels})"
                            f", got {tuple(mel.shape)}")
        x = mel.transpose(1, 2)  # (B, C, T)
        valid = valid_frames.to(torch.long)
        for conv, norm, k, s in zip(self.convs, self.norms,
                                    self.cfg.conv_kernels,
                                    self.cfg.conv_strides):
            x = conv(x)
            x = norm(x.transpose(1, 2))  # LayerNorm over channels, per frame
            x = F.gelu(x)
            valid = torch.clamp((valid + 2 * (k // 2) - k) // s + 1, min=1)
            pos = torch.arange(x.shape[1], device=x.device)
            keep = (pos[None, :] < valid[:, None]).unsqueeze(-1)
            x = (x * keep.to(x.dtype)).transpose(1, 2)
        x = x.transpose(1, 2)  # (B, T', C)
        if x.shape[1] > self.cfg.max_positions:
            raise DataError(f"audio of {x.shape[1]} post-conv frames exceeds "
                            f"max_positions={self.cfg.max_positions}")
        x = self.proj(x) + self.pos_emb[: x.shape[1]].to(x.dtype)
        pos = torch.arange(x.shape[1], device=x.device)
        pad_mask = pos[None, :] >= valid[:, None]
        for block in self.blocks:
            x = block(x, pad_mask)
        x = self.final_norm(x)
        pooled = masked_mean(x, pad_mask)
        return F.normalize(self.head(pooled), dim=-1)


class TextEncoder(nn.Module):
    """Token embedding plus transformer over serialized documents."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.tf_hidden,
                                  padding_idx=PAD_ID)
        self.pos_emb = nn.Parameter(
            torch.randn(cfg.max_text_len, cfg.tf_hidden) * 0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.tf_hidden, cfg.tf_heads, cfg.tf_ff,
                             cfg.dropout)
            for _ in range(cfg.tf_layers))
        self.final_norm = nn.LayerNorm(cfg.tf_hidden)
        self.head = nn.Linear(cfg.tf_hidden, cfg.embed_dim)

    def forward(self, tokens: torch.Tensor,
                lengths: torch.Tensor) -> torch.Tensor:
        """tokens (B, L) int64 padded with PAD_ID, lengths (B,) -> (B, D)."""
        if tokens.dim() != 2:
            raise DataError(f"expected tokens of shape (B, L), got "
                            f"{tuple(tokens.shape)}")
        if tokens.shape[1] > self.cfg.max_text_len:
            raise DataError(f"token sequence length {tokens.shape[1]} "
                            f"exceeds max_text_len={self.cfg.max_text_len}")
        if tokens.max() >= self.cfg.vocab_size or tokens.min() < 0:
            raise DataError("token id out of vocabulary range")
        x = self.embed(tokens)
        x = x + self.pos_emb[: x.shape[1]].to(x.dtype)
        pos = torch.arange(x.shape[1], device=x.device)
        pad_mask = pos[None, :] >= lengths.to(torch.long)[:, None]
        for block in self.blocks:
            x = block(x, pad_mask)
        x = self.final_norm(x)
        pooled = masked_mean(x, pad_mask)
        return F.normalize(self.head(pooled), dim=-1)


class FusionLayer(nn.Module):
    """Maps a (rec audio, rec text) embedding pair to one unit vector."""

    def __init__(self, embed_dim: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(2 * embed_dim, hidden), nn.GELU(),
                                 nn.Linear(hidden, embed_dim))

    def forward(self, audio_emb: torch.Tensor,
                text_emb: torch.Tensor) -> torch.Tensor:
        fused = self.net(torch.cat([audio_emb, text_emb], dim=-1))
        return F.normalize(fused, dim=-1)


class TwoTowerModel(nn.Module):
    """Audio tower, text tower, fusion head, and the softmax temperature."""

    def __init__(self, cfg: RunConfig):
        super().__init__()
        self.audio = AudioEncoder(cfg.audio_encoder)
        self.text = TextEncoder(cfg.text_encoder)
        self.fusion = FusionLayer(cfg.audio_encoder.embed_dim,
                                  cfg.loss.fusion_hidden)
        self.log_tau = nn.Parameter(
            torch.tensor(math.log(cfg.loss.temperature)),
            requires_grad=cfg.loss.learnable_temperature)

    @property
    def temperature(self) -> torch.Tensor:
        return self.log_tau.exp()

    def embed_audio(self, mel, valid_frames):
        return self.audio(mel, valid_frames)

    def embed_text(self, tokens, lengths):
        return self.text(tokens, lengths)


def build_model(cfg: RunConfig, seed: int = 0) -> TwoTowerModel:
    """Construct a model with a reproducible parameter initialization."""
    torch.manual_seed(seed)
    return TwoTowerModel(cfg)
