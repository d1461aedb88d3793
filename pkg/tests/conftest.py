"""Shared fixtures: a tiny corpus sized for unit tests, and the acceptance
criterion reporting hook."""

import numpy as np
import pytest
import torch

from tunesim.config import RunConfig
from tunesim import datagen, training
from tunesim.textproc import build_vocab, serialize_document

torch.set_num_threads(1)

ACCEPTANCE_RESULTS = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = (f"ACCEPTANCE CRITERION {number}: "
            f"{'PASS' if passed else 'FAIL'} - {detail}")
    ACCEPTANCE_RESULTS.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)


def tiny_run_config() -> RunConfig:
    """Small architecture and corpus settings shared by unit tests."""
    cfg = RunConfig()
    g = cfg.generator
    g.num_songs = 60
    g.duration_s = 1.0
    g.vocab_size = 200
    g.lang_pool_size = 6
    g.genre_pool_size = 10
    g.num_users = 8
    g.triggers_per_user = 5
    g.num_triplets = 200
    g.num_cooccurrence = 200
    g.num_neighbors = 5
    g.num_ranking_rows = 120
    g.history_len = 4
    g.num_eval_pairs = 40
    g.session_length = 5
    ae = cfg.audio_encoder
    ae.conv_channels = (32, 32, 32)
    ae.tf_hidden = 32
    ae.tf_heads = 4
    ae.tf_ff = 64
    ae.embed_dim = 16
    ae.max_positions = 64
    te = cfg.text_encoder
    te.tf_hidden = 32
    te.tf_heads = 4
    te.tf_ff = 64
    te.embed_dim = 16
    te.max_text_len = 64
    cfg.loss.fusion_hidden = 32
    cfg.pretrain.steps = 6
    cfg.pretrain.batch_size = 16
    cfg.pretrain.warmup_steps = 2
    cfg.pretrain.log_every = 2
    cfg.finetune.steps = 4
    cfg.finetune.batch_size = 8
    cfg.finetune.warmup_steps = 2
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def tiny_cfg() -> RunConfig:
    return tiny_run_config()


@pytest.fixture(scope="session")
def tiny_corpus(tiny_cfg):
    return datagen.generate_corpus(tiny_cfg.generator)


@pytest.fixture(scope="session")
def tiny_pref(tiny_cfg, tiny_corpus):
    return datagen.generate_preference_data(tiny_corpus, tiny_cfg.generator)


@pytest.fixture(scope="session")
def tiny_vocab(tiny_cfg, tiny_corpus):
    vocab = build_vocab(
        (serialize_document(tiny_corpus.texts[i])
         for i in tiny_corpus.train_ids),
        tiny_cfg.text_encoder.vocab_size)
    tiny_cfg.text_encoder.vocab_size = vocab.size
    return vocab


@pytest.fixture(scope="session")
def tiny_features(tiny_cfg, tiny_corpus, tiny_vocab):
    return training.featurize_corpus(tiny_corpus, tiny_cfg.mel, tiny_vocab,
                                     tiny_cfg.text_encoder.max_text_len)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
