import json

import numpy as np
import pytest
import torch
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from iurewrite.config import RunConfig
from iurewrite.corpus import CorpusError, Dialogue, make_synthetic_corpus
from iurewrite.encoder import EncoderError
from iurewrite.estimator import EditMatrixRewriter

TINY = dict(d_model=16, n_layers=1, n_heads=2, d_ff=32, d_hidden=16, d_int=8, unet_channels=8,
            steps=20, batch_size=4, warmup=5, merge_warmup=5, eval_every=10, dtype="float64")


@pytest.fixture(scope="module")
def data():
    return make_synthetic_corpus(0, 12)


@pytest.fixture(scope="module")
def fitted(data, tmp_path_factory):
    log = tmp_path_factory.mktemp("run") / "log.jsonl"
    est = EditMatrixRewriter(**TINY).fit(data, dev=data[:4], log_path=log)
    return est, log


def test_params_mirror_run_config():
    est = EditMatrixRewriter(**TINY)
    params = est.get_params()
    cfg_fields = set(RunConfig().to_dict()) - {"train_path", "dev_path"}
    assert set(params) == cfg_fields
    assert est.get_config() == RunConfig(**TINY)
    assert EditMatrixRewriter.from_config(RunConfig(**TINY)).get_params() == params
    assert clone(est).get_params() == params


def test_unfitted_estimator_refuses_to_predict(data):
    with pytest.raises(NotFittedError):
        EditMatrixRewriter().predict(data)


def test_fit_logs_every_step(fitted):
    est, log = fitted
    lines = [json.loads(x) for x in log.read_text().splitlines()]
    assert lines == est.log_
    assert [r["step"] for r in lines] == list(range(1, 21))
    assert set(lines[0]) == {"step", "L_edit", "L_sel", "L_mat", "L_int", "L_final", "lr"}
    assert lines[0]["lr"] == pytest.approx(1e-3 / 5)
    assert [s for s, _ in est.dev_history_] == [10, 20]
    assert est.n_unalignable_ == 0


def test_training_is_deterministic(data, fitted):
    est, _ = fitted
    again = EditMatrixRewriter(**TINY).fit(data, dev=data[:4])
    assert again.log_ == est.log_
    for a, b in zip(est.model_.state_dict().values(), again.model_.state_dict().values()):
        assert torch.equal(a, b)


def test_predict_shapes(data, fitted):
    est, _ = fitted
    preds = est.predict(data)
    assert len(preds) == len(data) and all(isinstance(p, str) and p for p in preds)
    assert 0.0 <= est.score(data) <= 1.0
    res, grids = est.predict_detailed(data[:2], merge_mode="OFF", return_grids=True)
    assert grids[0].shape == (len(data[0].context_tokens), len(data[0].incomplete), 3)
    np.testing.assert_allclose(grids[0].sum(-1), 1.0)


def test_checkpoint_roundtrip_is_bitwise(data, fitted, tmp_path):
    est, _ = fitted
    path = tmp_path / "m.pt"
    est.save(path)
    back = EditMatrixRewriter.load(path)
    assert back.get_params() == est.get_params()
    assert back.vocab_.to_list() == est.vocab_.to_list()
    assert back.best_step_ == est.best_step_
    _, g1 = est.predict_detailed(data, return_grids=True)
    _, g2 = back.predict_detailed(data, return_grids=True)
    assert all(np.array_equal(a, b) for a, b in zip(g1, g2))
    assert back.predict(data) == est.predict(data)


def test_y_supplies_rewrites(data):
    bare = [Dialogue(d.context, d.incomplete, None, d.id) for d in data]
    with pytest.raises(CorpusError, match=bare[0].id):
        EditMatrixRewriter(**TINY).fit(bare)
    est = EditMatrixRewriter(**dict(TINY, steps=2)).fit(bare, [d.rewrite.text for d in data])
    assert est.n_steps_ == 2
    est2 = EditMatrixRewriter(**dict(TINY, steps=2)).fit([d.to_record() for d in data])
    assert est2.log_ == est.log_


def test_sequences_longer_than_max_len_are_rejected(data):
    with pytest.raises(EncoderError, match="max_len"):
        EditMatrixRewriter(**dict(TINY, max_len=8)).fit(data)


def test_weight_averaging_leaves_training_untouched(data):
    raw = EditMatrixRewriter(**dict(TINY, ema_decay=0.0)).fit(data)
    avg = EditMatrixRewriter(**dict(TINY, ema_decay=0.9)).fit(data)
    assert raw.log_ == avg.log_
    diff = [not torch.equal(a, b) for a, b in zip(raw.model_.state_dict().values(),
                                                  avg.model_.state_dict().values())]
    assert any(diff)
