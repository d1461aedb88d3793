"""Symmetric InfoNCE and the two training objectives.

All inputs are unit-normalized embeddings with in-batch negatives: row i of
each matrix is the positive partner of row i of the other. A batch of one has
no negatives, so every directional loss is exactly zero there.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class LossReport:
    """Differentiable total plus detached per-component values
    (unweighted)."""

    total: torch.Tensor
    components: dict[str, float]


def info_nce_directional(query: torch.Tensor, key: torch.Tensor,
                         tau) -> torch.Tensor:
    """Cross-entropy of matching query i to key i among all keys.

    Computed as -(1/B) sum_i [sim_ii / tau - logsumexp_j sim_ij / tau],
    which is the numerically stable form.
    """
    logits = query @ key.T / tau
    return -(logits.diagonal() - torch.logsumexp(logits, dim=1)).mean()


def symmetric_info_nce(a: torch.Tensor, b: torch.Tensor,
                       tau) -> torch.Tensor:
    """Sum of both directional losses over one similarity matrix."""
    logits = a @ b.T / tau
    a_to_b = -(logits.diagonal() - torch.logsumexp(logits, dim=1)).mean()
    b_to_a = -(logits.diagonal() - torch.logsumexp(logits, dim=0)).mean()
    return a_to_b + b_to_a


def pretrain_loss(audio_emb: torch.Tensor, text_emb: torch.Tensor,
                  tau) -> LossReport:
    """Stage-1 objective: symmetric InfoNCE between a song's audio and its
    own text."""
    logits = audio_emb @ text_emb.T / tau
    a_to_t = -(logits.diagonal() - torch.logsumexp(logits, dim=1)).mean()
    t_to_a = -(logits.diagonal() - torch.logsumexp(logits, dim=0)).mean()
    total = a_to_t + t_to_a
    return LossReport(total, {"audio_to_text": float(a_to_t.detach()),
                              "text_to_audio": float(t_to_a.detach())})


def finetune_loss(trig_audio: torch.Tensor, rec_audio: torch.Tensor,
                  rec_text: torch.Tensor, fusion, tau, *,
                  w_audio_audio: float = 1.0, w_audio_fused: float = 1.0,
                  w_audio_text: float = 1.0,
                  include_text_terms: bool = True) -> LossReport:
    """Stage-2 objective over (trigger, recommendation) embedding batches.

    Three symmetric terms: trigger audio vs. rec audio, trigger audio vs. the
    fused rec embedding, and rec audio vs. rec text. With
    include_text_terms=False only the audio-audio term exists and the fusion
    module is not evaluated.
    """
    audio_audio = symmetric_info_nce(trig_audio, rec_audio, tau)
    if not include_text_terms:
        return LossReport(w_audio_audio * audio_audio,
                          {"audio_audio": float(audio_audio.detach())})
    fused = fusion(rec_audio, rec_text)
    audio_fused = symmetric_info_nce(trig_audio, fused, tau)
    audio_text = symmetric_info_nce(rec_audio, rec_text, tau)
    total = (w_audio_audio * audio_audio + w_audio_fused * audio_fused
             + w_audio_text * audio_text)
    return LossReport(total, {"audio_audio": float(audio_audio.detach()),
                              "audio_fused": float(audio_fused.detach()),
                              "audio_text": float(audio_text.detach())})
