import math

import numpy as np
import pytest
import torch

from shadowprompt.blocks import (
    DenseSparseAttention,
    SpatialFrequencyBlock,
    TokenBatch,
    dense_attention,
    inverse_shuffle,
    shuffle,
    sparse_attention,
)
from shadowprompt.errors import ArgumentError, DimensionError

# ---------------------------------------------------------------------------
# scalar oracles (straight-line re-implementations, independent of torch ops)


def conv3x3_scalar(x, w, b):
    c_out, c_in = w.shape[0], w.shape[1]
    h, wd = x.shape[1], x.shape[2]
    out = np.zeros((c_out, h, wd))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                acc = b[o]
                for ci in range(c_in):
                    for di in (-1, 0, 1):
                        for dj in (-1, 0, 1):
                            ii, jj = i + di, j + dj
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += w[o, ci, di + 1, dj + 1] * x[ci, ii, jj]
                out[o, i, j] = acc
    return out


def conv1x1_scalar(x, w, b):
    c_out, c_in = w.shape
    h, wd = x.shape[1], x.shape[2]
    out = np.zeros((c_out, h, wd))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                acc = b[o]
                for ci in range(c_in):
                    acc += w[o, ci] * x[ci, i, j]
                out[o, i, j] = acc
    return out


def haar_scalar(x):
    c, h, wd = x.shape
    ll = np.zeros((c, h // 2, wd // 2))
    lh = np.zeros_like(ll)
    hl = np.zeros_like(ll)
    hh = np.zeros_like(ll)
    for ci in range(c):
        for i in range(h // 2):
            for j in range(wd // 2):
                a = x[ci, 2 * i, 2 * j]
                b = x[ci, 2 * i, 2 * j + 1]
                cc = x[ci, 2 * i + 1, 2 * j]
                d = x[ci, 2 * i + 1, 2 * j + 1]
                ll[ci, i, j] = (a + b + cc + d) / 2
                lh[ci, i, j] = (a - b + cc - d) / 2
                hl[ci, i, j] = (a + b - cc - d) / 2
                hh[ci, i, j] = (a - b - cc + d) / 2
    return ll, lh, hl, hh


def ihaar_scalar(ll, lh, hl, hh):
    c, h2, w2 = ll.shape
    out = np.zeros((c, 2 * h2, 2 * w2))
    for ci in range(c):
        for i in range(h2):
            for j in range(w2):
                a, b, cc, d = ll[ci, i, j], lh[ci, i, j], hl[ci, i, j], hh[ci, i, j]
                out[ci, 2 * i, 2 * j] = (a + b + cc + d) / 2
                out[ci, 2 * i, 2 * j + 1] = (a - b + cc - d) / 2
                out[ci, 2 * i + 1, 2 * j] = (a + b - cc - d) / 2
                out[ci, 2 * i + 1, 2 * j + 1] = (a - b - cc + d) / 2
    return out


def sfi_oracle(f, block):
    w1 = block.conv1.weight.detach().numpy().astype(np.float64)
    b1 = block.conv1.bias.detach().numpy().astype(np.float64)
    w2 = block.conv2.weight.detach().numpy().astype(np.float64)
    b2 = block.conv2.bias.detach().numpy().astype(np.float64)
    w3 = block.conv3.weight.detach().numpy().astype(np.float64)
    b3 = block.conv3.bias.detach().numpy().astype(np.float64)
    wa = block.agg.weight.detach().numpy().astype(np.float64)
    ba = block.agg.bias.detach().numpy().astype(np.float64)

    ll, lh, hl, hh = haar_scalar(f)
    e_stack = np.concatenate([ll, lh, hl, hh], axis=0)
    z = conv3x3_scalar(f, w1, b1)
    g_stack = e_stack + conv1x1_scalar(e_stack, w2, b2)
    c = f.shape[0]
    g = [g_stack[i * c : (i + 1) * c] for i in range(4)]
    h_branch = f + conv1x1_scalar(z, w3, b3)
    fused = np.concatenate([ihaar_scalar(*g), h_branch], axis=0)
    return conv3x3_scalar(fused, wa, ba)


def softmax_row_scalar(row):
    shift = max(row)
    exps = [math.exp(v - shift) for v in row]
    total = sum(exps)
    return [e / total for e in exps]


def dense_scores_scalar(q, k):
    p, d = q.shape
    out = np.zeros((p, p))
    for i in range(p):
        logits = []
        for j in range(p):
            acc = 0.0
            for t in range(d):
                acc += q[i, t] * k[j, t]
            logits.append(acc / math.sqrt(d))
        out[i] = softmax_row_scalar(logits)
    return out


def sparse_scores_scalar(q, k):
    p, d = q.shape
    out = np.zeros((p, p))
    for i in range(p):
        logits = []
        for j in range(p):
            acc = 0.0
            for t in range(d):
                acc += q[i, t] * k[j, t]
            logits.append(acc / math.sqrt(d))
        keep = [v >= 0 for v in logits]
        if not any(keep):
            keep[logits.index(max(logits))] = True
        masked = [v if keeping else -math.inf for v, keeping in zip(logits, keep)]
        shift = max(masked)
        exps = [math.exp(v - shift) if keeping else 0.0 for v, keeping in zip(masked, keep)]
        total = sum(exps)
        out[i] = [e / total for e in exps]
    return out


def dsla_oracle(tokens, attn):
    wq = attn.wq.weight.detach().numpy().astype(np.float64)
    wk = attn.wk.weight.detach().numpy().astype(np.float64)
    wv = attn.wv.weight.detach().numpy().astype(np.float64)
    wp = attn.proj_out.weight.detach().numpy().astype(np.float64)
    bp = attn.proj_out.bias.detach().numpy().astype(np.float64)
    w1 = attn.omega1.detach().numpy().astype(np.float64)
    w2 = attn.omega2.detach().numpy().astype(np.float64)
    d = attn.head_dim
    out = np.zeros_like(tokens)
    for n in range(tokens.shape[0]):
        x = tokens[n]
        q, k, v = x @ wq.T, x @ wk.T, x @ wv.T
        merged = np.zeros_like(x)
        for hidx in range(attn.num_heads):
            sl = slice(hidx * d, (hidx + 1) * d)
            dense = dense_scores_scalar(q[:, sl], k[:, sl])
            sparse = sparse_scores_scalar(q[:, sl], k[:, sl])
            merged[:, sl] = (w1[hidx] * dense + w2[hidx] * sparse) @ v[:, sl]
        out[n] = merged @ wp.T + bp
    return out


# ---------------------------------------------------------------------------
# spatial-frequency interaction block


def test_sfi_zero_weights_collapse():
    block = SpatialFrequencyBlock(4).double()
    with torch.no_grad():
        for p in block.parameters():
            p.zero_()
    f = torch.randn(4, 8, 8, dtype=torch.float64)
    assert block(f).abs().max() == 0


def test_sfi_identity_path():
    c = 4
    block = SpatialFrequencyBlock(c).double()
    with torch.no_grad():
        block.conv2.weight.zero_()
        block.conv2.bias.zero_()
        block.conv3.weight.zero_()
        block.conv3.bias.zero_()
        block.agg.weight.zero_()
        block.agg.bias.zero_()
        # aggregation = per-channel average of its two inputs
        for ch in range(c):
            block.agg.weight[ch, ch, 1, 1] = 0.5
            block.agg.weight[ch, c + ch, 1, 1] = 0.5
    f = torch.randn(c, 8, 8, dtype=torch.float64)
    assert (block(f) - f).abs().max() < 1e-12


def test_sfi_matches_scalar_oracle():
    torch.manual_seed(3)
    block = SpatialFrequencyBlock(8).double()
    f = torch.randn(8, 16, 16, dtype=torch.float64)
    expected = sfi_oracle(f.numpy(), block)
    got = block(f).detach().numpy()
    assert np.abs(got - expected).max() < 1e-5


def test_sfi_shape_checks():
    block = SpatialFrequencyBlock(4)
    with pytest.raises(DimensionError):
        block(torch.zeros(3, 8, 8))
    with pytest.raises(DimensionError):
        block(torch.zeros(4, 7, 8))


# ---------------------------------------------------------------------------
# shuffle / inverse shuffle


def test_shuffle_identity_single_token():
    f = torch.arange(12.0).reshape(3, 2, 2)
    perm = torch.arange(4)
    t = shuffle(f, perm, 4)
    assert t.tokens.shape == (1, 4, 3)
    flat = f.flatten(-2).transpose(-2, -1)
    assert torch.equal(t.tokens[0], flat)


def test_shuffle_reversal_hand_case():
    f = torch.tensor([[[1.0, 2.0], [3.0, 4.0]]])
    t = shuffle(f, torch.tensor([3, 2, 1, 0]), 4)
    assert t.tokens.flatten().tolist() == [4.0, 3.0, 2.0, 1.0]


def test_shuffle_round_trip_many_perms():
    g = torch.Generator().manual_seed(0)
    f = torch.randn(3, 4, 8, generator=g)
    for _ in range(25):
        perm = torch.randperm(32, generator=g)
        restored = inverse_shuffle(shuffle(f, perm, 8))
        assert torch.equal(restored, f)


def test_shuffle_rejects_bad_args():
    f = torch.zeros(1, 2, 2)
    with pytest.raises(ArgumentError):
        shuffle(f, torch.tensor([0, 1, 2, 2]), 2)  # not a bijection
    with pytest.raises(ArgumentError):
        shuffle(f, torch.arange(4), 3)  # token_len does not divide
    good = shuffle(f, torch.arange(4), 2)
    with pytest.raises(ArgumentError):
        inverse_shuffle(TokenBatch(good.tokens, torch.tensor([0, 0, 1, 2]), (2, 2)))


def test_shuffle_batched_matches_unbatched():
    g = torch.Generator().manual_seed(4)
    f = torch.randn(2, 3, 4, 4, generator=g)
    perm = torch.randperm(16, generator=g)
    batched = shuffle(f, perm, 8)
    single = shuffle(f[1], perm, 8)
    assert torch.equal(batched.tokens[1], single.tokens)
    assert torch.equal(inverse_shuffle(batched), f)


# ---------------------------------------------------------------------------
# attention scores


def test_dense_uniform_for_zero_logits():
    scores = dense_attention(torch.zeros(5, 3), torch.zeros(5, 3))
    assert torch.allclose(scores, torch.full((5, 5), 0.2))


def test_dense_single_position():
    scores = dense_attention(torch.randn(1, 4), torch.randn(1, 4))
    assert scores.shape == (1, 1)
    assert scores.item() == pytest.approx(1.0)


def test_dense_matches_scalar_oracle():
    g = torch.Generator().manual_seed(12)
    q = torch.randn(4, 8, generator=g, dtype=torch.float64)
    k = torch.randn(4, 8, generator=g, dtype=torch.float64)
    expected = dense_scores_scalar(q.numpy(), k.numpy())
    got = dense_attention(q, k).numpy()
    assert np.abs(got - expected).max() < 1e-9
    assert np.abs(got.sum(axis=1) - 1).max() < 1e-6


def test_sparse_no_op_when_all_nonnegative():
    g = torch.Generator().manual_seed(2)
    q = torch.rand(4, 6, generator=g, dtype=torch.float64)  # positive orthant
    k = torch.rand(4, 6, generator=g, dtype=torch.float64)
    assert torch.allclose(sparse_attention(q, k), dense_attention(q, k))


def test_sparse_hand_case():
    # row 0 logits after scaling: [2, -1, 1]
    q = torch.tensor([[1.0], [0.0], [0.0]], dtype=torch.float64)
    k = torch.tensor([[2.0], [-1.0], [1.0]], dtype=torch.float64)
    scores = sparse_attention(q, k)
    e2, e1 = math.exp(2), math.exp(1)
    assert np.allclose(
        scores[0].numpy(), [e2 / (e2 + e1), 0.0, e1 / (e2 + e1)], atol=1e-12
    )
    # zero logits are retained: rows 1, 2 stay uniform
    assert torch.allclose(scores[1:], torch.full((2, 3), 1 / 3, dtype=torch.float64))


def test_sparse_degenerate_row_keeps_single_max():
    q = torch.tensor([[1.0]], dtype=torch.float64)
    k = torch.tensor([[-1.0], [-3.0], [-2.0]], dtype=torch.float64)
    scores = sparse_attention(q, k)
    assert scores.shape == (1, 3)
    assert scores[0].tolist() == [1.0, 0.0, 0.0]


def test_sparse_matches_scalar_oracle():
    g = torch.Generator().manual_seed(9)
    for _ in range(5):
        q = torch.randn(6, 4, generator=g, dtype=torch.float64)
        k = torch.randn(6, 4, generator=g, dtype=torch.float64)
        expected = sparse_scores_scalar(q.numpy(), k.numpy())
        got = sparse_attention(q, k).numpy()
        assert np.abs(got - expected).max() < 1e-9
        logits = (q @ k.T).numpy() / 2.0
        regular = ~(logits < 0).all(axis=1)  # degenerate rows keep their max
        assert (got[regular][logits[regular] < 0] == 0).all()
        assert np.abs(got.sum(axis=1) - 1).max() < 1e-9


def test_attention_rejects_zero_head_dim():
    with pytest.raises(ArgumentError):
        dense_attention(torch.zeros(2, 0), torch.zeros(2, 0))
    with pytest.raises(ArgumentError):
        sparse_attention(torch.zeros(2, 0), torch.zeros(2, 0))


# ---------------------------------------------------------------------------
# dense-sparse attention block


def _token_batch(gen, n=3, p=4, c=8):
    tokens = torch.randn(n, p, c, generator=gen, dtype=torch.float64)
    return TokenBatch(tokens, torch.randperm(n * p, generator=gen), (n, p))


def test_dsla_dense_only_when_omega2_zero():
    g = torch.Generator().manual_seed(21)
    attn = DenseSparseAttention(8, 2).double()
    with torch.no_grad():
        attn.omega1.fill_(1.0)
        attn.omega2.zero_()
    t = _token_batch(g)
    got = attn(t).tokens

    def dense_only(x):
        lead = x.shape[:-2]
        def split(v):
            return v.reshape(*lead, -1, 2, 4).transpose(-3, -2)
        qh, kh, vh = split(attn.wq(x)), split(attn.wk(x)), split(attn.wv(x))
        mixed = dense_attention(qh, kh) @ vh
        return attn.proj_out(mixed.transpose(-3, -2).reshape(*x.shape))

    expected = dense_only(t.tokens)
    assert (got - expected).abs().max() < 1e-6


def test_dsla_zero_omegas_leave_only_bias():
    g = torch.Generator().manual_seed(22)
    attn = DenseSparseAttention(8, 2).double()
    with torch.no_grad():
        attn.omega1.zero_()
        attn.omega2.zero_()
    t = _token_batch(g)
    out = attn(t).tokens
    assert (out - attn.proj_out.bias).abs().max() < 1e-12


def test_dsla_matches_scalar_oracle():
    torch.manual_seed(30)
    attn = DenseSparseAttention(8, 2).double()
    with torch.no_grad():
        attn.omega1.copy_(torch.tensor([0.7, 0.3]))
        attn.omega2.copy_(torch.tensor([0.4, 0.9]))
    g = torch.Generator().manual_seed(31)
    t = _token_batch(g, n=2, p=4, c=8)
    expected = dsla_oracle(t.tokens.numpy(), attn)
    got = attn(t).tokens.detach().numpy()
    assert np.abs(got - expected).max() < 1e-5


def test_dsla_preserves_permutation_and_shape():
    g = torch.Generator().manual_seed(40)
    attn = DenseSparseAttention(8, 4).double()
    t = _token_batch(g)
    out = attn(t)
    assert out.tokens.shape == t.tokens.shape
    assert torch.equal(out.permutation, t.permutation)
    assert out.grid_shape == t.grid_shape


def test_dsla_set_equivariance_within_token():
    g = torch.Generator().manual_seed(41)
    attn = DenseSparseAttention(8, 2).double()
    t = _token_batch(g, n=2, p=6, c=8)
    inner = torch.randperm(6, generator=g)
    permuted_tokens = t.tokens.clone()
    permuted_tokens[0] = permuted_tokens[0][inner]
    out = attn(t).tokens
    out_perm = attn(TokenBatch(permuted_tokens, t.permutation, t.grid_shape)).tokens
    assert (out_perm[0] - out[0][inner]).abs().max() < 1e-6
    assert (out_perm[1] - out[1]).abs().max() < 1e-12


def test_dsla_rejects_wrong_channels():
    attn = DenseSparseAttention(8, 2)
    bad = TokenBatch(torch.zeros(1, 4, 6), torch.arange(4), (1, 4))
    with pytest.raises(DimensionError):
        attn(bad)
    with pytest.raises(ArgumentError):
        DenseSparseAttention(6, 4)
