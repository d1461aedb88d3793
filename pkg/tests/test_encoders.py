"""Encoder shapes, conv length math, padding invariance, determinism."""

import numpy as np
import pytest
import torch

from tunesim.config import RunConfig
from tunesim.encoders import (AudioEncoder, FusionLayer, TextEncoder,
                              build_model, conv_output_length)
from tunesim.errors import DataError
from tunesim.textproc import PAD_ID


def small_cfg():
    cfg = RunConfig()
    ae = cfg.audio_encoder
    ae.conv_channels = (24, 24, 24)
    ae.tf_hidden = 24
    ae.tf_heads = 4
    ae.tf_ff = 48
    ae.embed_dim = 16
    ae.max_positions = 64
    te = cfg.text_encoder
    te.vocab_size = 50
    te.tf_hidden = 24
    te.tf_heads = 4
    te.tf_ff = 48
    te.embed_dim = 16
    te.max_text_len = 32
    cfg.loss.fusion_hidden = 24
    cfg.validate()
    return cfg


def test_conv_output_length_reference_chains():
    # defaults: kernels (5, 3, 3), strides (2, 2, 2), padding k // 2
    chain = [1251]
    for k, s in ((5, 2), (3, 2), (3, 2)):
        chain.append(conv_output_length(chain[-1], k, s, k // 2))
    assert chain == [1251, 626, 313, 157]
    chain = [84]
    for k, s in ((5, 2), (3, 2), (3, 2)):
        chain.append(conv_output_length(chain[-1], k, s, k // 2))
    assert chain == [84, 42, 21, 11]


def test_conv_output_length_matches_torch():
    torch.manual_seed(0)
    for length, k, s in [(11, 5, 2), (12, 3, 2), (7, 3, 1), (84, 5, 2),
                         (1, 5, 2), (1, 3, 2)]:
        conv = torch.nn.Conv1d(1, 1, k, stride=s, padding=k // 2)
        out = conv(torch.zeros(1, 1, length))
        assert out.shape[2] == conv_output_length(length, k, s, k // 2)


def test_audio_encoder_output_frames_helper():
    cfg = RunConfig().audio_encoder
    cfg.max_positions = 512
    enc = AudioEncoder(cfg)
    assert enc.output_frames(1251) == 157
    assert enc.output_frames(84) == 11


def test_audio_encoder_shapes_and_unit_norm(rng):
    cfg = small_cfg()
    torch.manual_seed(0)
    enc = AudioEncoder(cfg.audio_encoder)
    mel = torch.from_numpy(
        rng.standard_normal((3, 11, 128)).astype(np.float32))
    out = enc(mel, torch.tensor([11, 11, 11]))
    assert out.shape == (3, 16)
    np.testing.assert_allclose(np.linalg.norm(out.detach().numpy(), axis=1),
                               1.0, atol=1e-5)


def test_audio_encoder_padding_invariance(rng):
    cfg = small_cfg()
    torch.manual_seed(0)
    enc = AudioEncoder(cfg.audio_encoder)
    enc.eval()
    mel_short = rng.standard_normal((1, 7, 128)).astype(np.float32)
    padded = np.zeros((1, 19, 128), dtype=np.float32)
    padded[:, :7] = mel_short
    with torch.no_grad():
        alone = enc(torch.from_numpy(mel_short), torch.tensor([7]))
        batched = enc(torch.from_numpy(padded), torch.tensor([7]))
    np.testing.assert_allclose(alone.numpy(), batched.numpy(), atol=1e-5)


def test_audio_encoder_masks_far_garbage(rng):
    # the conv kernels read two frames past the valid region; garbage
    # further out than that must not reach the embedding
    cfg = small_cfg()
    torch.manual_seed(0)
    enc = AudioEncoder(cfg.audio_encoder)
    enc.eval()
    clean = np.zeros((1, 30, 128), dtype=np.float32)
    clean[:, :7] = rng.standard_normal((1, 7, 128)).astype(np.float32)
    dirty = clean.copy()
    dirty[:, 12:] = 123.0
    with torch.no_grad():
        a = enc(torch.from_numpy(clean), torch.tensor([7]))
        b = enc(torch.from_numpy(dirty), torch.tensor([7]))
    np.testing.assert_allclose(a.numpy(), b.numpy(), atol=1e-5)


def test_audio_encoder_mixed_batch_matches_solo(rng):
    cfg = small_cfg()
    torch.manual_seed(1)
    enc = AudioEncoder(cfg.audio_encoder)
    enc.eval()
    a = rng.standard_normal((1, 11, 128)).astype(np.float32)
    b = rng.standard_normal((1, 6, 128)).astype(np.float32)
    batch = np.zeros((2, 11, 128), dtype=np.float32)
    batch[0] = a[0]
    batch[1, :6] = b[0]
    with torch.no_grad():
        together = enc(torch.from_numpy(batch), torch.tensor([11, 6]))
        solo_a = enc(torch.from_numpy(a), torch.tensor([11]))
        solo_b = enc(torch.from_numpy(b), torch.tensor([6]))
    np.testing.assert_allclose(together[0].numpy(), solo_a[0].numpy(),
                               atol=1e-5)
    np.testing.assert_allclose(together[1].numpy(), solo_b[0].numpy(),
                               atol=1e-5)


def test_audio_encoder_rejects_bad_input():
    cfg = small_cfg()
    enc = AudioEncoder(cfg.audio_encoder)
    with pytest.raises(DataError, match="shape"):
        enc(torch.zeros(2, 11, 64), torch.tensor([11, 11]))
    long_cfg = small_cfg().audio_encoder
    long_cfg.max_positions = 2
    enc2 = AudioEncoder(long_cfg)
    with pytest.raises(DataError, match="max_positions"):
        enc2(torch.zeros(1, 40, 128), torch.tensor([40]))


def test_text_encoder_shapes_and_padding(rng):
    cfg = small_cfg()
    torch.manual_seed(0)
    enc = TextEncoder(cfg.text_encoder)
    enc.eval()
    tokens = torch.full((2, 10), PAD_ID, dtype=torch.long)
    tokens[0, :6] = torch.tensor([2, 5, 6, 7, 8, 9])
    tokens[1, :3] = torch.tensor([2, 4, 3])
    with torch.no_grad():
        out = enc(tokens, torch.tensor([6, 3]))
        solo = enc(tokens[1:, :3], torch.tensor([3]))
    assert out.shape == (2, 16)
    np.testing.assert_allclose(np.linalg.norm(out.numpy(), axis=1), 1.0,
                               atol=1e-5)
    np.testing.assert_allclose(out[1].numpy(), solo[0].numpy(), atol=1e-5)


def test_text_encoder_rejects_bad_tokens():
    cfg = small_cfg()
    enc = TextEncoder(cfg.text_encoder)
    with pytest.raises(DataError, match="max_text_len"):
        enc(torch.zeros(1, 40, dtype=torch.long), torch.tensor([40]))
    with pytest.raises(DataError, match="vocabulary range"):
        enc(torch.tensor([[2, 99]]), torch.tensor([2]))
    with pytest.raises(DataError, match="shape"):
        enc(torch.zeros(4, dtype=torch.long), torch.tensor([4]))


def test_fusion_layer_unit_norm(rng):
    torch.manual_seed(0)
    fusion = FusionLayer(16, 24)
    a = torch.nn.functional.normalize(torch.randn(5, 16), dim=-1)
    b = torch.nn.functional.normalize(torch.randn(5, 16), dim=-1)
    out = fusion(a, b)
    assert out.shape == (5, 16)
    np.testing.assert_allclose(
        np.linalg.norm(out.detach().numpy(), axis=1), 1.0, atol=1e-5)


def test_build_model_deterministic(rng):
    cfg = small_cfg()
    m1 = build_model(cfg, seed=3)
    m2 = build_model(cfg, seed=3)
    for (n1, p1), (n2, p2) in zip(m1.named_parameters(),
                                  m2.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.detach().numpy(),
                                      p2.detach().numpy())
    m3 = build_model(cfg, seed=4)
    assert any(not np.array_equal(p.detach().numpy(), q.detach().numpy())
               for p, q in zip(m1.parameters(), m3.parameters()))


def test_model_temperature():
    cfg = small_cfg()
    model = build_model(cfg, seed=0)
    assert float(model.temperature) == pytest.approx(0.07, rel=1e-6)
    assert not model.log_tau.requires_grad
    cfg.loss.learnable_temperature = True
    model2 = build_model(cfg, seed=0)
    assert model2.log_tau.requires_grad


def test_encoders_support_float64(rng):
    cfg = small_cfg()
    model = build_model(cfg, seed=0).double()
    mel = torch.from_numpy(rng.standard_normal((2, 9, 128)))
    out = model.embed_audio(mel, torch.tensor([9, 9]))
    assert out.dtype == torch.float64
    tok = torch.tensor([[2, 4, 5], [2, 3, PAD_ID]])
    out_t = model.embed_text(tok, torch.tensor([3, 2]))
    assert out_t.dtype == torch.float64
