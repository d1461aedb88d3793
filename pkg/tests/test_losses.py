"""Contrastive loss oracles.

The reference values below were computed by hand from the closed form
of the batch-softmax cross entropy. The numpy oracle recomputes both
directions with plain loops so the torch implementation is checked
against an independent route.
"""

import numpy as np
import pytest
import torch

from tunesim.encoders import FusionLayer
from tunesim.losses import (finetune_loss, info_nce_directional,
                            pretrain_loss, symmetric_info_nce)

# B=2 identity similarity matrix, tau=1:
# per row loss = -log(e^1 / (e^1 + e^0)) = log(1 + e^-1)
IDENTITY_B2_DIRECTIONAL = 0.31326168751822286
IDENTITY_B2_SYMMETRIC = 0.6265233750364457


def unit_rows(rng, b, d):
    x = rng.standard_normal((b, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def oracle_directional(q, k, tau):
    logits = q @ k.T / tau
    total = 0.0
    for i in range(q.shape[0]):
        row = logits[i]
        total += -(row[i] - np.log(np.sum(np.exp(row - row.max())))
                   - row.max())
    return total / q.shape[0]


def oracle_symmetric(a, b, tau):
    return oracle_directional(a, b, tau) + oracle_directional(b, a, tau)


def test_identity_pair_frozen_value():
    eye = torch.eye(2, dtype=torch.float64)
    val = info_nce_directional(eye, eye, 1.0)
    assert float(val) == pytest.approx(IDENTITY_B2_DIRECTIONAL, abs=1e-12)
    sym = symmetric_info_nce(eye, eye, 1.0)
    assert float(sym) == pytest.approx(IDENTITY_B2_SYMMETRIC, abs=1e-12)


def test_single_pair_is_zero():
    a = torch.nn.functional.normalize(torch.randn(1, 8, dtype=torch.float64),
                                      dim=-1)
    b = torch.nn.functional.normalize(torch.randn(1, 8, dtype=torch.float64),
                                      dim=-1)
    assert float(symmetric_info_nce(a, b, 0.07)) == 0.0


def test_huge_temperature_limit():
    # tau -> inf flattens the softmax, each direction tends to log B
    rng = np.random.default_rng(5)
    for b in (2, 5, 9):
        a = torch.from_numpy(unit_rows(rng, b, 12))
        c = torch.from_numpy(unit_rows(rng, b, 12))
        val = float(symmetric_info_nce(a, c, 1e6))
        assert val == pytest.approx(2.0 * np.log(b), abs=1e-5)


def test_matches_numpy_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        b = int(rng.integers(2, 9))
        d = int(rng.integers(4, 17))
        tau = float(rng.choice([0.07, 0.5, 1.0]))
        a = unit_rows(rng, b, d)
        c = unit_rows(rng, b, d)
        got = float(symmetric_info_nce(torch.from_numpy(a),
                                       torch.from_numpy(c), tau))
        assert got == pytest.approx(oracle_symmetric(a, c, tau), abs=1e-10)
        got_dir = float(info_nce_directional(torch.from_numpy(a),
                                             torch.from_numpy(c), tau))
        assert got_dir == pytest.approx(oracle_directional(a, c, tau),
                                        abs=1e-10)


def test_pretrain_loss_components():
    rng = np.random.default_rng(2)
    a = torch.from_numpy(unit_rows(rng, 6, 8))
    t = torch.from_numpy(unit_rows(rng, 6, 8))
    report = pretrain_loss(a, t, 0.07)
    assert set(report.components) == {"audio_to_text", "text_to_audio"}
    assert float(report.total) == pytest.approx(
        report.components["audio_to_text"] + report.components["text_to_audio"],
        abs=1e-10)
    assert float(report.total) == pytest.approx(
        oracle_symmetric(a.numpy(), t.numpy(), 0.07), abs=1e-10)


def make_finetune_inputs(rng, b=5, d=8):
    trig = torch.from_numpy(unit_rows(rng, b, d))
    rec = torch.from_numpy(unit_rows(rng, b, d))
    text = torch.from_numpy(unit_rows(rng, b, d))
    torch.manual_seed(0)
    fusion = FusionLayer(d, 16).double()
    return trig, rec, text, fusion


def test_finetune_loss_components_and_weights():
    rng = np.random.default_rng(3)
    trig, rec, text, fusion = make_finetune_inputs(rng)
    base = finetune_loss(trig, rec, text, fusion, 0.07,
                         w_audio_audio=1.0, w_audio_fused=1.0,
                         w_audio_text=1.0, include_text_terms=True)
    assert set(base.components) == {"audio_audio", "audio_fused", "audio_text"}
    fused = fusion(rec, text)
    assert base.components["audio_audio"] == pytest.approx(
        oracle_symmetric(trig.numpy(), rec.numpy(), 0.07), abs=1e-10)
    assert base.components["audio_fused"] == pytest.approx(
        oracle_symmetric(trig.numpy(), fused.detach().numpy(), 0.07),
        abs=1e-10)
    assert base.components["audio_text"] == pytest.approx(
        oracle_symmetric(rec.numpy(), text.numpy(), 0.07), abs=1e-10)

    weighted = finetune_loss(trig, rec, text, fusion, 0.07,
                             w_audio_audio=2.0, w_audio_fused=3.0,
                             w_audio_text=5.0, include_text_terms=True)
    expect = (2.0 * base.components["audio_audio"]
              + 3.0 * base.components["audio_fused"]
              + 5.0 * base.components["audio_text"])
    assert float(weighted.total.detach()) == pytest.approx(expect, abs=1e-9)
    # reported components stay unweighted
    for name in base.components:
        assert weighted.components[name] == pytest.approx(
            base.components[name], abs=1e-12)


def test_finetune_loss_audio_only_route():
    rng = np.random.default_rng(4)
    trig, rec, _, _ = make_finetune_inputs(rng)
    # fusion=None proves the text path is never touched on this route
    report = finetune_loss(trig, rec, None, None, 0.07,
                           w_audio_audio=1.0, w_audio_fused=1.0,
                           w_audio_text=1.0, include_text_terms=False)
    assert set(report.components) == {"audio_audio"}
    assert float(report.total) == pytest.approx(
        oracle_symmetric(trig.numpy(), rec.numpy(), 0.07), abs=1e-10)


def test_symmetry_under_joint_permutation():
    rng = np.random.default_rng(6)
    a = unit_rows(rng, 7, 10)
    b = unit_rows(rng, 7, 10)
    perm = rng.permutation(7)
    v1 = float(symmetric_info_nce(torch.from_numpy(a), torch.from_numpy(b),
                                  0.07))
    v2 = float(symmetric_info_nce(torch.from_numpy(a[perm]),
                                  torch.from_numpy(b[perm]), 0.07))
    assert v1 == pytest.approx(v2, abs=1e-10)


def test_gradients_are_finite():
    rng = np.random.default_rng(7)
    trig, rec, text, fusion = make_finetune_inputs(rng)
    trig.requires_grad_(True)
    rec.requires_grad_(True)
    text.requires_grad_(True)
    report = finetune_loss(trig, rec, text, fusion, 0.07,
                           w_audio_audio=1.0, w_audio_fused=1.0,
                           w_audio_text=1.0, include_text_terms=True)
    report.total.backward()
    for t in (trig, rec, text):
        assert torch.isfinite(t.grad).all()
    for p in fusion.parameters():
        assert torch.isfinite(p.grad).all()
