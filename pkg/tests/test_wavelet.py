import numpy as np
import pytest
import torch

from shadowprompt.blocks import WaveletCoeffs, dwt2, idwt2
from shadowprompt.errors import DimensionError


def test_constant_input():
    f = torch.full((1, 4, 4), 1.0, dtype=torch.float64)
    w = dwt2(f)
    assert w.ll.shape == (1, 2, 2)
    assert torch.allclose(w.ll, torch.full((1, 2, 2), 2.0, dtype=torch.float64))
    for band in (w.lh, w.hl, w.hh):
        assert band.shape == (1, 2, 2)
        assert band.abs().max() == 0


def test_single_block_definition():
    a, b, c, d = 0.7, -1.3, 2.1, 0.4
    f = torch.tensor([[[a, b], [c, d]]], dtype=torch.float64)
    w = dwt2(f)
    assert w.ll.item() == pytest.approx((a + b + c + d) / 2)
    assert w.lh.item() == pytest.approx((a - b + c - d) / 2)
    assert w.hl.item() == pytest.approx((a + b - c - d) / 2)
    assert w.hh.item() == pytest.approx((a - b - c + d) / 2)


def test_round_trip_random():
    g = torch.Generator().manual_seed(11)
    f = torch.randn(3, 8, 8, generator=g, dtype=torch.float64)
    r = idwt2(dwt2(f))
    assert (r - f).abs().max() < 1e-6


def test_idwt_constant_and_zero():
    coeffs = WaveletCoeffs(
        torch.full((1, 2, 2), 2.0), torch.zeros(1, 2, 2),
        torch.zeros(1, 2, 2), torch.zeros(1, 2, 2),
    )
    out = idwt2(coeffs)
    assert torch.allclose(out, torch.ones(1, 4, 4))
    zero = WaveletCoeffs(*(torch.zeros(2, 3, 3) for _ in range(4)))
    assert idwt2(zero).abs().max() == 0


def test_energy_preserved():
    g = torch.Generator().manual_seed(5)
    for _ in range(20):
        c = int(torch.randint(1, 4, (1,), generator=g))
        h = 2 * int(torch.randint(1, 8, (1,), generator=g))
        wd = 2 * int(torch.randint(1, 8, (1,), generator=g))
        f = torch.randn(c, h, wd, generator=g, dtype=torch.float64)
        w = dwt2(f)
        total = sum(band.pow(2).sum() for band in w)
        rel = abs(f.pow(2).sum() - total) / f.pow(2).sum()
        assert rel < 1e-6
        assert (idwt2(w) - f).abs().max() < 1e-6


def test_odd_dims_rejected():
    with pytest.raises(DimensionError):
        dwt2(torch.zeros(1, 3, 4))
    with pytest.raises(DimensionError):
        dwt2(torch.zeros(1, 4, 5))


def test_subband_mismatch_rejected():
    w = WaveletCoeffs(
        torch.zeros(1, 2, 2), torch.zeros(1, 2, 2),
        torch.zeros(1, 2, 2), torch.zeros(1, 3, 2),
    )
    with pytest.raises(DimensionError):
        idwt2(w)
