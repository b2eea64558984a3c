import pytest
import torch

from iurewrite.config import RunConfig
from iurewrite.corpus import Dialogue, Vocab, make_synthetic_corpus
from iurewrite.model import RewriterModel, collate, prepare

PARSONS_CONTEXT = [
    "Parsons studied biology at Amherst college.",
    "Who is one of his professors at Amherst?",
    "Parsons ' biology professors at Amherst were Glaser and Henry.",
    "What are his interest?",
    "Parsons showed from early on, a great interest in the topic of philosophy,",
]
PARSONS_INCOMPLETE = "Anything else he was interested to?"
PARSONS_REWRITE = "Other than philosophy, is there anything else parsons was interested in?"

ACCEPTANCE_RESULTS = []


@pytest.fixture
def parsons():
    return Dialogue.from_texts(PARSONS_CONTEXT, PARSONS_INCOMPLETE, PARSONS_REWRITE, id="parsons")


def tiny_config(**kw) -> RunConfig:
    base = dict(d_model=16, n_layers=1, n_heads=2, d_ff=32, d_hidden=16, d_int=8,
                unet_channels=8, dtype="float64")
    base.update(kw)
    return RunConfig(**base)


def tiny_setup(seed=0, n=4, **kw):
    """A float64 toy model, its vocabulary and one collated training batch."""
    data = make_synthetic_corpus(seed, n)
    vocab = Vocab.build(data)
    cfg = tiny_config(seed=seed, **kw)
    torch.manual_seed(seed)
    model = RewriterModel(len(vocab), cfg).double()
    batch = collate([prepare(d, vocab) for d in data], torch.float64)
    return model, vocab, batch, data


@pytest.fixture
def tiny():
    return tiny_setup()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
