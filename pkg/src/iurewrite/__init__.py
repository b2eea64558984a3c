"""Edit-matrix rewriting of incomplete dialogue utterances."""
from .config import RunConfig, load_config
from .corpus import Dialogue, Utterance, Vocab, encode_example, load_jsonl, make_synthetic_corpus, tokenize
from .estimator import EditLabeler, EditMatrixRewriter
from .heads import MergeMode, merge_relevance
from .metrics import MetricsReport, evaluate
from .rewriter import EditSpan, apply_edits, decode_grid
from .supervision import EditType, build_gold_edit_grid, relevance_labels, restored_words

__all__ = [
    "Dialogue", "EditLabeler", "EditMatrixRewriter", "EditSpan", "EditType", "MergeMode",
    "MetricsReport", "RunConfig", "Utterance", "Vocab", "apply_edits", "build_gold_edit_grid",
    "decode_grid", "encode_example", "evaluate", "load_config", "load_jsonl",
    "make_synthetic_corpus", "merge_relevance", "relevance_labels", "restored_words", "tokenize",
]
__version__ = "0.1.0"
