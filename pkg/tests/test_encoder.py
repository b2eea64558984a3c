import pytest
import torch

from conftest import tiny_setup
from iurewrite.corpus import Vocab, encode_example, make_synthetic_corpus
from iurewrite.encoder import (EncoderConfig, EncoderError, TransformerEncoder, encode, encode_rewrite,
                               masked_mean_pool, pool_utterances, pooling_matrix)


@pytest.fixture
def enc():
    torch.manual_seed(0)
    data = make_synthetic_corpus(0, 6)
    vocab = Vocab.build(data)
    e = TransformerEncoder(len(vocab), EncoderConfig(d_model=16, n_layers=2, n_heads=2, d_ff=32)).double()
    e.eval()
    return e, vocab, data


def test_config_validation():
    with pytest.raises(EncoderError):
        EncoderConfig(d_model=10, n_heads=3)
    with pytest.raises(EncoderError):
        EncoderConfig(dropout=1.0)


def test_batched_padding_matches_single(enc):
    e, vocab, data = enc
    xs = [encode_example(d, vocab) for d in data]
    L = max(len(x) for x in xs)
    ids = torch.zeros(len(xs), L, dtype=torch.long)
    pad = torch.ones(len(xs), L, dtype=torch.bool)
    for b, x in enumerate(xs):
        ids[b, :len(x)] = torch.tensor(x.token_ids)
        pad[b, :len(x)] = False
    H = e(ids, pad)
    for b, x in enumerate(xs):
        single = encode(x, e)
        torch.testing.assert_close(H[b, :len(x)], single.H, rtol=0, atol=1e-12)
        assert (H[b, len(x):] == 0).all()


def test_pooling_matrix_equals_span_means(enc):
    e, vocab, data = enc
    x = encode_example(data[0], vocab)
    out = encode(x, e)
    W = pooling_matrix([x.segment_spans], len(x.segment_spans), len(x), torch.float64)
    pooled = W[0] @ out.H
    torch.testing.assert_close(pooled[:-1], torch.stack(out.c), rtol=0, atol=1e-14)
    torch.testing.assert_close(pooled[-1], out.u, rtol=0, atol=1e-14)
    assert len(out.c) == data[0].n_context


def test_attention_is_row_stochastic_and_ignores_padding(enc):
    e, vocab, data = enc
    ids = torch.tensor([encode_example(data[0], vocab).token_ids + [0, 0, 0]])
    pad = ids == 0
    _, attn = e(ids, pad, return_attention=True)
    for a in attn:
        torch.testing.assert_close(a.sum(-1), torch.ones_like(a.sum(-1)))
        assert (a[..., pad[0]] == 0).all()


def test_errors(enc):
    e, vocab, _ = enc
    ids = torch.ones(1, 200, dtype=torch.long)
    with pytest.raises(EncoderError, match="max_len"):
        e(ids, torch.zeros_like(ids, dtype=torch.bool))
    H = torch.zeros(5, 4)
    with pytest.raises(EncoderError):
        pool_utterances(H, [(2, 2), (3, 5)])
    with pytest.raises(EncoderError):
        pool_utterances(H, [(0, 2), (3, 9)])
    with pytest.raises(EncoderError):
        encode_rewrite(None, vocab, e)


def test_rewrite_vector_matches_batched_pooling(enc):
    e, vocab, data = enc
    toks = data[0].rewrite.tokens
    r = encode_rewrite(toks, vocab, e)
    ids = torch.tensor([vocab.lookup(toks) + [0, 0]])
    pad = ids == 0
    torch.testing.assert_close(masked_mean_pool(e(ids, pad), pad)[0], r, rtol=0, atol=1e-12)


def test_finite_difference_through_rewrite_path():
    """The intention loss reaches the encoder only through r and [C; u]; probe one weight."""
    model, _, batch, _ = tiny_setup(seed=3, alpha1=0.0, alpha2=0.0)
    L_int = model.losses(batch)["L_int"][0]
    w = model.encoder.layers[0].ff[0].weight
    (g,) = torch.autograd.grad(L_int, [w])
    idx = tuple(int(i) for i in torch.nonzero(g.abs() == g.abs().max())[0])
    h = 1e-5
    with torch.no_grad():
        w[idx] += h
        up = float(model.losses(batch)["L_int"][0])
        w[idx] -= 2 * h
        down = float(model.losses(batch)["L_int"][0])
        w[idx] += h
    num = (up - down) / (2 * h)
    assert g[idx] != 0
    assert abs(num - float(g[idx])) <= 1e-6 * max(abs(num), 1e-6)
