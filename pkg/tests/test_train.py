from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from fixtures import SMALL_ENCODER, gradient_errors, random_intra_graph
from segcl import pipeline, synthetic
from segcl.autograd import Tensor, mul, tsum
from segcl.config import load_config
from segcl.events import load_corpus
from segcl.losses import LossConfig
from segcl.train import (
    NonFiniteGradientError, TrainConfig, TrainingDivergedError, backward, init_params,
    load_checkpoint, load_embeddings, load_embeddings_binary, save_checkpoint, save_embeddings,
    save_history, train,
)


def corpus(n=6, seed=0):
    rng = np.random.default_rng(seed)
    return [random_intra_graph(rng, int(rng.integers(3, 7)), doc_id=f"d{i}") for i in range(n)]


@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(seed):
    errors = gradient_errors(seed)
    assert max(errors.values()) < 1e-4, errors


@pytest.mark.parametrize("mode", ["paper-literal", "hinge"])
def test_gradients_upper_bound_modes(mode):
    errors = gradient_errors(11, LossConfig(eta=0.2, theta=0.1, upper_bound_sign=mode))
    assert max(errors.values()) < 1e-4


def test_fully_clamped_loss_has_zero_gradients():
    g = random_intra_graph(np.random.default_rng(0), 4)
    params = init_params([g], SMALL_ENCODER, 0)
    W = params.mlp_weights[0]
    objective = tsum(mul(W, np.zeros_like(W.data)))
    grads = backward(objective, params)
    assert all(not v.any() for v in grads.values())


def test_zero_learning_rate_keeps_parameters():
    graphs = corpus()
    params = init_params(graphs, SMALL_ENCODER, 0)
    before = {k: v.data.copy() for k, v in params.named().items()}
    train(graphs, SMALL_ENCODER, LossConfig(), TrainConfig(learning_rate=0.0, max_epochs=3,
                                                           batch_size=2), params=params)
    for k, v in params.named().items():
        assert np.array_equal(v.data, before[k]), k


def test_same_seed_same_history_bitwise():
    graphs = corpus()
    cfg = TrainConfig(learning_rate=0.05, max_epochs=5, batch_size=4, seed=3)
    enc = SMALL_ENCODER.__class__(**{**SMALL_ENCODER.__dict__, "dropout": 0.4})
    a = train(graphs, enc, LossConfig(), cfg)
    b = train(graphs, enc, LossConfig(), cfg)
    assert [r.row() for r in a.history] == [r.row() for r in b.history]
    for (k, x), (_, y) in zip(a.params.named().items(), b.params.named().items()):
        assert x.data.tobytes() == y.data.tobytes(), k


def test_ablated_upper_bound_history_is_zero():
    graphs = corpus()
    res = train(graphs, SMALL_ENCODER, LossConfig().ablate("upper_bound"),
                TrainConfig(learning_rate=0.05, max_epochs=3))
    assert all(r.zeta_u == 0.0 for r in res.history)


def test_small_graphs_are_skipped():
    rng = np.random.default_rng(0)
    graphs = corpus(3) + [random_intra_graph(rng, 1, doc_id="tiny")]
    res = train(graphs, SMALL_ENCODER, LossConfig(), TrainConfig(max_epochs=1))
    assert len(res.history) == 1 and "features/tiny" in res.params.named()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    graphs = corpus(2)
    params = init_params(graphs, SMALL_ENCODER, 0)
    params.gcn_weights[0].data[:] = np.inf
    with pytest.raises((TrainingDivergedError, NonFiniteGradientError)):
        train(graphs, SMALL_ENCODER, LossConfig(), TrainConfig(max_epochs=1), params=params)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_gradient_names_parameter():
    graphs = corpus(1)
    params = init_params(graphs, SMALL_ENCODER, 0)
    W = params.gcn_weights[1]
    objective = tsum(mul(W, np.full(W.shape, np.inf))) * Tensor(0.0)
    with pytest.raises(NonFiniteGradientError, match="gcn.W1"):
        backward(objective, params)


def test_convergence_stop():
    graphs = corpus()
    res = train(graphs, SMALL_ENCODER, LossConfig(),
                TrainConfig(learning_rate=0.0, max_epochs=50, convergence_window=3))
    assert res.stopped == "converged" and len(res.history) == 4


def test_checkpoint_roundtrip(tmp_path):
    graphs = corpus(3)
    params = init_params(graphs, SMALL_ENCODER, 1)
    save_checkpoint(params, tmp_path / "m.json", {"note": 1})
    loaded, cfg = load_checkpoint(tmp_path / "m.json")
    assert cfg == {"note": 1}
    for (k, a), (k2, b) in zip(sorted(params.named().items()), sorted(loaded.named().items())):
        assert k == k2 and a.data.tobytes() == b.data.tobytes()


def test_history_csv(tmp_path):
    graphs = corpus(3)
    res = train(graphs, SMALL_ENCODER, LossConfig(), TrainConfig(max_epochs=2))
    save_history(res.history, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,zeta_s,zeta_e,zeta_u,zeta_total" and len(lines) == 3


def test_embeddings_text_and_binary_agree(tmp_path):
    X = np.random.default_rng(0).normal(size=(3, 4))
    side = save_embeddings(["a", "b", "c"], X, tmp_path / "e.tsv")
    ids, Y = load_embeddings(tmp_path / "e.tsv")
    assert ids == ["a", "b", "c"]
    assert Y.tobytes() == X.tobytes() == load_embeddings_binary(side).tobytes()


@pytest.mark.slow
def test_loss_mostly_non_increasing_on_synthetic_corpus(tmp_path):
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "synthetic.yaml")
    # package training defaults; dropout off so per-epoch losses are not resampled noise
    cfg = replace(cfg, train=TrainConfig(), encoder=replace(cfg.encoder, dropout=0.0))
    corpus = load_corpus(synthetic.write_corpus(tmp_path / "c.tsv"), "labeled-tsv")
    graphs = pipeline.build(pipeline.extract(corpus, cfg), cfg, [d.doc_id for d in corpus])
    graphs = pipeline.mark(graphs, pipeline.mine_patterns(graphs, cfg), cfg)
    totals = [r.zeta_total for r in pipeline.fit(graphs, cfg).history]
    assert np.mean(np.diff(totals) <= 0) >= 0.9
