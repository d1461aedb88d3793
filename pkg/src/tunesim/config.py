"""Configuration dataclasses and the file/flag merge machinery.

Precedence: built-in defaults < JSON config file < --set overrides.
Unknown keys are rejected with the full dotted path so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field, fields

from .errors import ConfigError


@dataclass
class GeneratorConfig:
    """Synthetic corpus and preference-data generator settings."""

    seed: int = 0
    num_songs: int = 2000
    num_genres: int = 8
    num_languages: int = 4
    style_dim: int = 8
    # style = style_coupling * genre_centroid + style_noise * N(0, I)
    style_coupling: float = 1.0
    style_noise: float = 0.9
    sample_rate: int = 16000
    duration_s: float = 8.0
    bank_sines: int = 10
    amp_jitter: float = 0.35
    noise_std: float = 0.02
    lang_tone_amp: float = 0.05
    vocab_size: int = 1200
    lang_pool_size: int = 40
    genre_pool_size: int = 80
    title_tokens: tuple[int, ...] = (2, 4)
    artist_count: tuple[int, ...] = (1, 3)
    artist_tokens: tuple[int, ...] = (1, 2)
    lyrics_tokens: tuple[int, ...] = (12, 30)
    num_users: int = 800
    triggers_per_user: int = 30
    num_triplets: int = 6000
    num_cooccurrence: int = 6000
    num_neighbors: int = 20
    acceptance_noise: float = 0.2
    session_mix_rate: float = 0.75
    session_length: int = 8
    num_ranking_rows: int = 10000
    history_len: int = 10
    num_eval_pairs: int = 2000
    holdout_modulus: int = 10

    def validate(self) -> None:
        for name in ("num_songs", "num_genres", "num_languages", "style_dim",
                     "sample_rate", "bank_sines", "vocab_size",
                     "lang_pool_size", "genre_pool_size", "num_users",
                     "triggers_per_user", "num_triplets", "num_cooccurrence",
                     "num_neighbors", "session_length", "num_ranking_rows",
                     "history_len", "num_eval_pairs", "holdout_modulus"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"generator.{name} must be positive")
        if self.duration_s <= 0:
            raise ConfigError("generator.duration_s must be positive")
        if not 0.0 <= self.acceptance_noise <= 1.0:
            raise ConfigError("generator.acceptance_noise must be in [0, 1]")
        if self.amp_jitter < 0:
            raise ConfigError("generator.amp_jitter must be >= 0")
        if not 0.0 <= self.session_mix_rate <= 1.0:
            raise ConfigError("generator.session_mix_rate must be in [0, 1]")
        reserved = (self.num_languages * self.lang_pool_size
                    + self.num_genres * self.genre_pool_size)
        if reserved >= self.vocab_size:
            raise ConfigError(
                "generator.vocab_size must exceed the language and genre "
                f"pools ({reserved} tokens)")
        for name in ("title_tokens", "artist_count", "artist_tokens",
                     "lyrics_tokens"):
            lo_hi = getattr(self, name)
            if len(lo_hi) != 2 or lo_hi[0] < 1 or lo_hi[1] < lo_hi[0]:
                raise ConfigError(f"generator.{name} must be (lo, hi) with "
                                  "1 <= lo <= hi")


@dataclass
class MelConfig:
    """Log-mel spectrogram frontend settings."""

    sample_rate: int = 16000
    window_ms: float = 128.0
    hop_ms: float = 96.0
    n_mels: int = 128
    fmin_hz: float = 20.0
    fmax_hz: float | None = None  # None -> Nyquist
    log_floor: float = -10.0
    max_seconds: float = 120.0  # audio beyond this is dropped before framing

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    def validate(self) -> None:
        if self.sample_rate <= 0:
            raise ConfigError("mel.sample_rate must be positive")
        if self.hop_ms <= 0 or self.window_ms < self.hop_ms:
            raise ConfigError("mel.window_ms must be >= mel.hop_ms > 0")
        if self.n_mels <= 0:
            raise ConfigError("mel.n_mels must be positive")
        nyquist = self.sample_rate / 2.0
        fmax = nyquist if self.fmax_hz is None else self.fmax_hz
        if not 0.0 <= self.fmin_hz < fmax <= nyquist:
            raise ConfigError("mel frequency range must satisfy "
                              "0 <= fmin_hz < fmax_hz <= Nyquist")
        if self.max_seconds <= 0:
            raise ConfigError("mel.max_seconds must be positive")


@dataclass
class AudioEncoderConfig:
    n_mels: int = 128
    conv_channels: tuple[int, ...] = (512, 512, 512)
    conv_kernels: tuple[int, ...] = (5, 3, 3)
    conv_strides: tuple[int, ...] = (2, 2, 2)
    tf_hidden: int = 128
    tf_layers: int = 2
    tf_heads: int = 4
    tf_ff: int = 512
    embed_dim: int = 64
    max_positions: int = 512
    dropout: float = 0.0

    def validate(self) -> None:
        if not (len(self.conv_channels) == len(self.conv_kernels)
                == len(self.conv_strides) > 0):
            raise ConfigError("audio_encoder conv_channels/kernels/strides "
                              "must have equal nonzero length")
        for name in ("n_mels", "tf_hidden", "tf_layers", "tf_heads", "tf_ff",
                     "embed_dim", "max_positions"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"audio_encoder.{name} must be positive")
        if any(k <= 0 for k in self.conv_kernels):
            raise ConfigError("audio_encoder.conv_kernels must be positive")
        if any(s <= 0 for s in self.conv_strides):
            raise ConfigError("audio_encoder.conv_strides must be positive")
        if any(c <= 0 for c in self.conv_channels):
            raise ConfigError("audio_encoder.conv_channels must be positive")
        if self.tf_hidden % self.tf_heads != 0:
            raise ConfigError("audio_encoder.tf_hidden must be divisible by "
                              "tf_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("audio_encoder.dropout must be in [0, 1)")


@dataclass
class TextEncoderConfig:
    vocab_size: int = 2000
    tf_hidden: int = 128
    tf_layers: int = 2
    tf_heads: int = 4
    tf_ff: int = 512
    embed_dim: int = 64
    max_text_len: int = 512
    dropout: float = 0.0

    def validate(self) -> None:
        for name in ("vocab_size", "tf_hidden", "tf_layers", "tf_heads",
                     "tf_ff", "embed_dim", "max_text_len"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"text_encoder.{name} must be positive")
        if self.vocab_size < 3:
            raise ConfigError("text_encoder.vocab_size must cover the "
                              "reserved pad/unk/bos ids")
        if self.tf_hidden % self.tf_heads != 0:
            raise ConfigError("text_encoder.tf_hidden must be divisible by "
                              "tf_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("text_encoder.dropout must be in [0, 1)")


@dataclass
class LossConfig:
    temperature: float = 0.07
    learnable_temperature: bool = False
    w_audio_audio: float = 1.0
    w_audio_fused: float = 1.0
    w_audio_text: float = 1.0
    fusion_hidden: int = 256

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ConfigError("loss.temperature must be positive")
        for name in ("w_audio_audio", "w_audio_fused", "w_audio_text"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss.{name} must be >= 0")
        if self.fusion_hidden <= 0:
            raise ConfigError("loss.fusion_hidden must be positive")


@dataclass
class TrainConfig:
    batch_size: int = 64
    steps: int = 1200
    lr_main: float = 1e-3
    lr_text: float = 3e-5
    warmup_steps: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    seed: int = 0
    deterministic: bool = True
    text_trainable: bool = True
    ablation: str = "none"
    log_every: int = 25

    def validate(self, section: str) -> None:
        for name in ("batch_size", "steps", "log_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{section}.{name} must be positive")
        for name in ("lr_main", "lr_text"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{section}.{name} must be positive")
        if self.warmup_steps < 0:
            raise ConfigError(f"{section}.warmup_steps must be >= 0")
        if self.grad_clip <= 0:
            raise ConfigError(f"{section}.grad_clip must be positive")
        if not 0.0 < self.adam_beta1 < 1.0 or not 0.0 < self.adam_beta2 < 1.0:
            raise ConfigError(f"{section} Adam betas must be in (0, 1)")
        if self.ablation not in ("none", "cf_pairs", "no_text"):
            raise ConfigError(f"{section}.ablation must be one of "
                              "none, cf_pairs, no_text")


@dataclass
class ProbeConfig:
    lr: float = 0.05
    steps: int = 300
    train_frac: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0 or self.steps <= 0:
            raise ConfigError("probe.lr and probe.steps must be positive")
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError("probe.train_frac must be in (0, 1)")


@dataclass
class EvalConfig:
    k_retrieve: int = 10
    hr_cutoff: int = 100
    hist_bins: int = 40
    ranking_lr: float = 0.05
    ranking_steps: int = 300
    ranking_train_frac: float = 0.7
    embed_batch: int = 256

    def validate(self) -> None:
        for name in ("k_retrieve", "hr_cutoff", "hist_bins", "ranking_steps",
                     "embed_batch"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"eval.{name} must be positive")
        if self.ranking_lr <= 0:
            raise ConfigError("eval.ranking_lr must be positive")
        if not 0.0 < self.ranking_train_frac < 1.0:
            raise ConfigError("eval.ranking_train_frac must be in (0, 1)")


def _finetune_defaults() -> TrainConfig:
    return TrainConfig(batch_size=32, steps=1200, lr_main=1e-4)


@dataclass
class RunConfig:
    """Top-level configuration covering every command."""

    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    audio_encoder: AudioEncoderConfig = field(
        default_factory=AudioEncoderConfig)
    text_encoder: TextEncoderConfig = field(default_factory=TextEncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    pretrain: TrainConfig = field(default_factory=TrainConfig)
    finetune: TrainConfig = field(default_factory=_finetune_defaults)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        self.generator.validate()
        self.mel.validate()
        self.audio_encoder.validate()
        self.text_encoder.validate()
        self.loss.validate()
        self.pretrain.validate("pretrain")
        self.finetune.validate("finetune")
        self.probe.validate()
        self.eval.validate()
        if self.audio_encoder.n_mels != self.mel.n_mels:
            raise ConfigError("audio_encoder.n_mels must match mel.n_mels")
        if self.audio_encoder.embed_dim != self.text_encoder.embed_dim:
            raise ConfigError("audio and text embed_dim must match")


def _coerce(value, annotation, key: str):
    """Coerce a JSON value to the annotated field type, or raise."""
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):  # Optional[...]
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"config key {key} expects a list")
        elem = typing.get_args(annotation)[0]
        return tuple(_coerce(v, elem, key) for v in value)
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key} expects a boolean")
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key} expects an integer")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"config key {key} expects an integer")
        return int(value)
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key} expects a number")
        return float(value)
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigError(f"config key {key} expects a string")
        return value
    raise ConfigError(f"config key {key} has unsupported type")


def _field_types(obj) -> dict[str, object]:
    hints = typing.get_type_hints(type(obj))
    return {f.name: hints[f.name] for f in fields(obj)}


def _merge_dict(obj, data: dict, prefix: str = "") -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"config section {prefix or '<root>'} must be an "
                          "object")
    types = _field_types(obj)
    for key, value in data.items():
        full = f"{prefix}{key}"
        if key not in types:
            raise ConfigError(f"unknown config key: {full}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _merge_dict(current, value, prefix=f"{full}.")
        else:
            setattr(obj, key, _coerce(value, types[key], full))


def apply_override(cfg: RunConfig, dotted: str, raw: str) -> None:
    """Apply one ``--set section.key=value`` override in place."""
    parts = dotted.split(".")
    obj = cfg
    for i, part in enumerate(parts[:-1]):
        types = _field_types(obj)
        if part not in types or not dataclasses.is_dataclass(
                getattr(obj, part)):
            raise ConfigError(f"unknown config key: {dotted}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    types = _field_types(obj)
    if leaf not in types or dataclasses.is_dataclass(getattr(obj, leaf)):
        raise ConfigError(f"unknown config key: {dotted}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings, e.g. ablation=no_text
    setattr(obj, leaf, _coerce(value, types[leaf], dotted))


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    _merge_dict(cfg, data)
    return cfg


def load_config(path: str | None = None,
                overrides: typing.Sequence[str] = ()) -> RunConfig:
    """Build a validated RunConfig from defaults, a JSON file, and --set
    overrides, in that precedence order.
    """
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        _merge_dict(cfg, data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got: {item}")
        dotted, raw = item.split("=", 1)
        apply_override(cfg, dotted.strip(), raw.strip())
    cfg.validate()
    return cfg
