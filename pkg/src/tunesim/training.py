"""Featurization and the two training stages.

Batch composition is a pure function of (seed, step, dataset size): each
epoch is a fresh permutation from ``default_rng([seed, epoch])`` and batches
read positions off the concatenated permutation stream. Resuming at step k
therefore reproduces the exact batches of an uninterrupted run without
serializing RNG state.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .checkpoint import (CheckpointBundle, apply_model_state,
                         model_state_arrays, save_checkpoint)
from .config import LossConfig, MelConfig, RunConfig, TrainConfig
from .config import config_from_dict, config_to_dict
from .datagen import Corpus
from .encoders import TwoTowerModel, build_model
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .losses import LossReport, finetune_loss, pretrain_loss
from .melspec import compute_log_mel, load_mel_cache, save_mel_cache
from .textproc import PAD_ID, TextDocument, Vocab, encode_document

CACHE_ENV_VAR = "TUNESIM_CACHE_DIR"


@dataclass
class FeatureSet:
    """Mel and token features for a corpus, row-aligned across fields."""

    song_ids: list[int]
    mels: torch.Tensor           # (N, T, n_mels) float32, zero padded
    valid_frames: torch.Tensor   # (N,) long
    tokens: torch.Tensor         # (N, L) long, PAD_ID padded
    token_lengths: torch.Tensor  # (N,) long
    genres: np.ndarray
    languages: np.ndarray
    id_to_row: dict[int, int] = field(init=False)

    def __post_init__(self):
        self.id_to_row = {s: i for i, s in enumerate(self.song_ids)}

    def rows_for(self, ids) -> np.ndarray:
        try:
            return np.asarray([self.id_to_row[int(i)] for i in ids])
        except KeyError as exc:
            raise DataError(f"song_id {exc.args[0]} has no features "
                            "(not in the corpus?)")


def _cache_name(song_id: int, cfg: MelConfig) -> str:
    key = (f"{cfg.sample_rate}:{cfg.window_ms}:{cfg.hop_ms}:{cfg.n_mels}:"
           f"{cfg.fmin_hz}:{cfg.fmax_hz}:{cfg.log_floor}:{cfg.max_seconds}")
    tag = hashlib.sha1(key.encode()).hexdigest()[:10]
    return f"{song_id:06d}_{tag}.mel"


def featurize_corpus(corpus: Corpus, mel_cfg: MelConfig, vocab: Vocab,
                     max_text_len: int,
                     cache_dir: str | None = None) -> FeatureSet:
    """Compute (or read from cache) mel features and token ids for every
    song."""
    if corpus.sample_rate != mel_cfg.sample_rate:
        raise DataError(f"corpus sample rate {corpus.sample_rate} != "
                        f"mel.sample_rate {mel_cfg.sample_rate}")
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
    ids = corpus.song_ids
    mels, token_rows = [], []
    for song_id in ids:
        mel = None
        cache_path = None
        if cache_dir:
            cache_path = os.path.join(cache_dir,
                                      _cache_name(song_id, mel_cfg))
            if os.path.exists(cache_path):
                mel, valid = load_mel_cache(cache_path)
                if mel.shape[1] != mel_cfg.n_mels or valid != mel.shape[0]:
                    raise DataError(f"mel cache {cache_path} does not match "
                                    "the configured frontend")
        if mel is None:
            mel = compute_log_mel(corpus.waveform(song_id), mel_cfg)
            if cache_path:
                save_mel_cache(cache_path, mel, mel.shape[0])
        mels.append(torch.from_numpy(mel))
        doc = corpus.texts.get(song_id, TextDocument())
        token_rows.append(encode_document(doc, vocab, max_text_len))

    n = len(ids)
    t_max = max(m.shape[0] for m in mels)
    mel_batch = torch.zeros(n, t_max, mel_cfg.n_mels, dtype=torch.float32)
    valid_frames = torch.zeros(n, dtype=torch.long)
    for i, m in enumerate(mels):
        mel_batch[i, : m.shape[0]] = m
        valid_frames[i] = m.shape[0]
    l_max = max(len(t) for t in token_rows)
    tokens = torch.full((n, l_max), PAD_ID, dtype=torch.long)
    lengths = torch.zeros(n, dtype=torch.long)
    for i, row in enumerate(token_rows):
        tokens[i, : len(row)] = torch.from_numpy(row)
        lengths[i] = len(row)
    genres = np.asarray([corpus.songs[i].genre for i in ids])
    languages = np.asarray([corpus.songs[i].language for i in ids])
    return FeatureSet(ids, mel_batch, valid_frames, tokens, lengths,
                      genres, languages)


def batch_indices(seed: int, step: int, n: int, batch_size: int) -> np.ndarray:
    """Dataset positions for one step of the permutation stream."""
    start = step * batch_size
    out = []
    while len(out) < batch_size:
        epoch = start // n
        offset = start % n
        perm = np.random.default_rng([seed, epoch]).permutation(n)
        take = perm[offset: offset + (batch_size - len(out))]
        out.extend(int(i) for i in take)
        start += len(take)
    return np.asarray(out)


@dataclass
class TrainingLogEntry:
    step: int
    total: float
    components: dict[str, float]
    wall_time_s: float

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "total": self.total,
                           "components": self.components,
                           "wall_time_s": self.wall_time_s})


def trainable_parameters(model: TwoTowerModel) -> list[torch.nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def build_optimizer(model: TwoTowerModel,
                    cfg: TrainConfig) -> torch.optim.Adam:
    """Adam with two groups: the text tower at lr_text, everything else at
    lr_main."""
    if not cfg.text_trainable:
        for p in model.text.parameters():
            p.requires_grad_(False)
    text_params = [p for p in model.text.parameters() if p.requires_grad]
    text_set = set(map(id, model.text.parameters()))
    main_params = [p for p in model.parameters()
                   if p.requires_grad and id(p) not in text_set]
    groups = [{"params": main_params, "lr": cfg.lr_main,
               "initial_lr": cfg.lr_main}]
    if text_params:
        groups.append({"params": text_params, "lr": cfg.lr_text,
                       "initial_lr": cfg.lr_text})
    return torch.optim.Adam(groups, betas=(cfg.adam_beta1, cfg.adam_beta2),
                            eps=cfg.adam_eps)


def _apply_warmup(optimizer, step: int, warmup: int) -> None:
    scale = min(1.0, (step + 1) / warmup) if warmup > 0 else 1.0
    for group in optimizer.param_groups:
        group["lr"] = group["initial_lr"] * scale


def _run_loop(model: TwoTowerModel, cfg: TrainConfig, n_items: int,
              forward_fn, log_path=None, start_step: int = 0,
              optimizer=None) -> list[TrainingLogEntry]:
    if n_items < 1:
        raise DataError("training set is empty")
    if cfg.deterministic:
        torch.manual_seed(cfg.seed)
        torch.use_deterministic_algorithms(True)
    if optimizer is None:
        optimizer = build_optimizer(model, cfg)
    params = trainable_parameters(model)
    entries = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    t0 = time.perf_counter()
    try:
        model.train()
        for step in range(start_step, cfg.steps):
            idx = batch_indices(cfg.seed, step, n_items, cfg.batch_size)
            report: LossReport = forward_fn(idx)
            if not torch.isfinite(report.total):
                raise NumericError(f"non-finite loss at step {step}: "
                                   f"{report.components}")
            optimizer.zero_grad(set_to_none=True)
            report.total.backward()
            torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            _apply_warmup(optimizer, step, cfg.warmup_steps)
            optimizer.step()
            entry = TrainingLogEntry(step, float(report.total.detach()),
                                     report.components,
                                     time.perf_counter() - t0)
            entries.append(entry)
            if log_fh and (step % cfg.log_every == 0
                           or step == cfg.steps - 1):
                log_fh.write(entry.to_json() + "\n")
                log_fh.flush()
    finally:
        if log_fh:
            log_fh.close()
    return entries


def pretrain(model: TwoTowerModel, features: FeatureSet, cfg: TrainConfig,
             loss_cfg: LossConfig, train_ids, log_path=None,
             start_step: int = 0,
             optimizer=None) -> list[TrainingLogEntry]:
    """Stage 1: align each song's audio embedding with its own text."""
    rows = features.rows_for(train_ids)

    def forward(idx: np.ndarray) -> LossReport:
        r = torch.from_numpy(rows[idx])
        audio = model.embed_audio(features.mels[r], features.valid_frames[r])
        text = model.embed_text(features.tokens[r],
                                features.token_lengths[r])
        return pretrain_loss(audio, text, model.temperature)

    return _run_loop(model, cfg, len(rows), forward, log_path, start_step,
                     optimizer)


def finetune(model: TwoTowerModel, features: FeatureSet, cfg: TrainConfig,
             loss_cfg: LossConfig, pairs, log_path=None,
             start_step: int = 0,
             optimizer=None) -> list[TrainingLogEntry]:
    """Stage 2: pull trigger embeddings toward accepted-recommendation
    embeddings.

    ``pairs`` is a sequence of (trigger_id, rec_id)-shaped rows: training
    triplets normally, co-occurrence pairs under the cf_pairs ablation. Under
    the no_text ablation only the audio-audio term is optimized.
    """
    if len(pairs) == 0:
        raise DataError("no training pairs for the finetune stage")
    id_pairs = [_pair_ids(p) for p in pairs]
    trig_rows = features.rows_for([a for a, _ in id_pairs])
    rec_rows = features.rows_for([b for _, b in id_pairs])
    include_text = cfg.ablation != "no_text"

    def forward(idx: np.ndarray) -> LossReport:
        tr = torch.from_numpy(trig_rows[idx])
        rr = torch.from_numpy(rec_rows[idx])
        trig_audio = model.embed_audio(features.mels[tr],
                                       features.valid_frames[tr])
        rec_audio = model.embed_audio(features.mels[rr],
                                      features.valid_frames[rr])
        rec_text = None
        if include_text:
            rec_text = model.embed_text(features.tokens[rr],
                                        features.token_lengths[rr])
        return finetune_loss(trig_audio, rec_audio, rec_text, model.fusion,
                             model.temperature,
                             w_audio_audio=loss_cfg.w_audio_audio,
                             w_audio_fused=loss_cfg.w_audio_fused,
                             w_audio_text=loss_cfg.w_audio_text,
                             include_text_terms=include_text)

    return _run_loop(model, cfg, len(pairs), forward, log_path, start_step,
                     optimizer)


def _pair_ids(row) -> tuple[int, int]:
    if hasattr(row, "trigger_id"):
        return row.trigger_id, row.rec_id
    if hasattr(row, "a_id"):
        return row.a_id, row.b_id
    a, b = row
    return int(a), int(b)


# ---------------------------------------------------------------------------
# checkpoint glue


def optimizer_state_arrays(optimizer, model: TwoTowerModel) -> dict:
    """Adam moments as checkpoint tensors, keyed by parameter name."""
    name_of = {id(p): n for n, p in model.named_parameters()}
    out = {}
    for group in optimizer.param_groups:
        for p in group["params"]:
            state = optimizer.state.get(p)
            if not state:
                continue
            name = name_of[id(p)]
            out[f"opt.exp_avg.{name}"] = state["exp_avg"].detach().numpy()
            out[f"opt.exp_avg_sq.{name}"] = \
                state["exp_avg_sq"].detach().numpy()
            out[f"opt.step.{name}"] = np.asarray(
                [float(state["step"])], dtype=np.float32)
    return out


def restore_optimizer_state(optimizer, model: TwoTowerModel,
                            tensors: dict) -> None:
    name_of = {id(p): n for n, p in model.named_parameters()}
    for group in optimizer.param_groups:
        for p in group["params"]:
            name = name_of[id(p)]
            key = f"opt.exp_avg.{name}"
            if key not in tensors:
                continue
            optimizer.state[p] = {
                "step": torch.tensor(
                    float(tensors[f"opt.step.{name}"][0])),
                "exp_avg": torch.from_numpy(
                    tensors[key].copy()),
                "exp_avg_sq": torch.from_numpy(
                    tensors[f"opt.exp_avg_sq.{name}"].copy()),
            }


def save_training_checkpoint(path, model: TwoTowerModel, cfg: RunConfig,
                             vocab: Vocab, stage: str, step: int,
                             optimizer=None) -> None:
    """Write model (and optionally optimizer) state with the config
    snapshot."""
    tensors = model_state_arrays(model)
    if optimizer is not None:
        tensors.update(optimizer_state_arrays(optimizer, model))
    config = {"run": config_to_dict(cfg), "vocab": list(vocab.id_to_token),
              "stage": stage, "step": int(step)}
    save_checkpoint(path, config, tensors)


def model_from_bundle(bundle: CheckpointBundle):
    """Rebuild (model, run config, vocab, stage, step) from a loaded
    checkpoint."""
    for key in ("run", "vocab", "stage", "step"):
        if key not in bundle.config:
            raise CheckpointError(f"checkpoint config lacks the {key!r} "
                                  "entry")
    try:
        cfg = config_from_dict(bundle.config["run"])
        cfg.validate()
    except ConfigError as exc:
        raise CheckpointError(f"checkpoint config is not usable: {exc}")
    try:
        vocab = Vocab(list(bundle.config["vocab"]))
    except DataError as exc:
        raise CheckpointError(f"checkpoint vocabulary is not usable: {exc}")
    if vocab.size != cfg.text_encoder.vocab_size:
        raise CheckpointError(
            f"checkpoint vocabulary has {vocab.size} entries but the config "
            f"says text_encoder.vocab_size={cfg.text_encoder.vocab_size}")
    model = build_model(cfg)
    apply_model_state(model, bundle.tensors)
    model.eval()
    return model, cfg, vocab, bundle.config["stage"], int(
        bundle.config["step"])
