"""Dialogue loading, tokenization, sequence encoding and synthetic corpora."""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

PAD, SEP, UNK = "[PAD]", "[SEP]", "[UNK]"
RESERVED = (PAD, SEP, UNK)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class CorpusError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach every punctuation mark."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Utterance:
    text: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, text: str) -> "Utterance":
        return cls(text, tuple(tokenize(text)))

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Utterance":
        return cls(" ".join(tokens), tuple(tokens))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Dialogue:
    context: tuple[Utterance, ...]
    incomplete: Utterance
    rewrite: Optional[Utterance] = None
    id: str = ""

    def __post_init__(self):
        if len(self.context) < 1:
            raise CorpusError(f"dialogue {self.id!r}: empty context")
        for k, utt in enumerate(self.context):
            if len(utt) == 0:
                raise CorpusError(f"dialogue {self.id!r}: context utterance {k} has no tokens")
        if len(self.incomplete) == 0:
            raise CorpusError(f"dialogue {self.id!r}: incomplete utterance has no tokens")
        if self.rewrite is not None and len(self.rewrite) == 0:
            raise CorpusError(f"dialogue {self.id!r}: rewrite has no tokens")

    @classmethod
    def from_texts(cls, context: Iterable[str], incomplete: str,
                   rewrite: Optional[str] = None, id: str = "") -> "Dialogue":
        return cls(
            context=tuple(Utterance.from_text(c) for c in context),
            incomplete=Utterance.from_text(incomplete),
            rewrite=None if rewrite is None else Utterance.from_text(rewrite),
            id=id,
        )

    @property
    def n_context(self) -> int:
        return len(self.context)

    @property
    def context_tokens(self) -> list[str]:
        """All context tokens in order, without separators (the grid rows)."""
        return [t for utt in self.context for t in utt.tokens]

    @property
    def row_owner(self) -> list[int]:
        """Index of the context utterance owning each grid row."""
        return [k for k, utt in enumerate(self.context) for _ in utt.tokens]

    def to_record(self) -> dict:
        rec = {"id": self.id, "context": [u.text for u in self.context],
               "incomplete": self.incomplete.text}
        if self.rewrite is not None:
            rec["rewrite"] = self.rewrite.text
        return rec


class Vocab:
    """Token/id bijection. Reserved ids come first."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            self.add(t)

    pad_id = 0
    sep_id = 1
    unk_id = 2

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __getitem__(self, token: str) -> int:
        return self.stoi.get(token, self.unk_id)

    def lookup(self, tokens: Iterable[str]) -> list[int]:
        return [self[t] for t in tokens]

    @classmethod
    def build(cls, dialogues: Iterable[Dialogue], include_rewrite: bool = True) -> "Vocab":
        seen: dict[str, None] = {}
        for d in dialogues:
            utts = list(d.context) + [d.incomplete]
            if include_rewrite and d.rewrite is not None:
                utts.append(d.rewrite)
            for utt in utts:
                for t in utt.tokens:
                    seen.setdefault(t, None)
        return cls(sorted(seen))

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocab":
        if tuple(itos[: len(RESERVED)]) != RESERVED:
            raise CorpusError("vocabulary does not start with the reserved tokens")
        return cls(itos[len(RESERVED):])


@dataclass
class EncodedExample:
    token_ids: list[int]
    segment_spans: list[tuple[int, int]]
    n_ctx_tokens: int
    n_utt_tokens: int
    tokens: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def context_positions(self) -> list[int]:
        return [p for s, e in self.segment_spans[:-1] for p in range(s, e)]

    @property
    def incomplete_positions(self) -> list[int]:
        s, e = self.segment_spans[-1]
        return list(range(s, e))


def encode_example(d: Dialogue, vocab: Vocab) -> EncodedExample:
    """Lay out ``ctx_1 [SEP] ctx_2 [SEP] ... ctx_n [SEP] incomplete``."""
    ids: list[int] = []
    toks: list[str] = []
    spans = []
    for utt in d.context:
        start = len(ids)
        ids.extend(vocab.lookup(utt.tokens))
        toks.extend(utt.tokens)
        spans.append((start, len(ids)))
        ids.append(vocab.sep_id)
        toks.append(SEP)
    start = len(ids)
    ids.extend(vocab.lookup(d.incomplete.tokens))
    toks.extend(d.incomplete.tokens)
    spans.append((start, len(ids)))
    n_ctx = sum(len(u) for u in d.context)
    return EncodedExample(ids, spans, n_ctx, len(d.incomplete), toks)


def _parse_record(rec: dict, lineno: int) -> Dialogue:
    if not isinstance(rec, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    for key in ("context", "incomplete"):
        if key not in rec:
            raise CorpusError(f"line {lineno}: missing field {key!r}")
    ctx = rec["context"]
    if not isinstance(ctx, list) or not all(isinstance(c, str) for c in ctx):
        raise CorpusError(f"line {lineno}: 'context' must be a list of strings")
    if not isinstance(rec["incomplete"], str):
        raise CorpusError(f"line {lineno}: 'incomplete' must be a string")
    rewrite = rec.get("rewrite")
    if rewrite is not None and not isinstance(rewrite, str):
        raise CorpusError(f"line {lineno}: 'rewrite' must be a string")
    did = str(rec.get("id", lineno))
    if not ctx:
        raise CorpusError(f"dialogue {did!r}: empty context")
    try:
        return Dialogue.from_texts(ctx, rec["incomplete"], rewrite, id=did)
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from None


def load_jsonl(path: str | Path) -> list[Dialogue]:
    """Read dialogues from JSON Lines. Ids default to the 1-based line number."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            out.append(_parse_record(rec, lineno))
    return out


def dump_jsonl(dialogues: Iterable[Dialogue], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(json.dumps(d.to_record(), ensure_ascii=False) + "\n")


def convert_canard(records: Iterable[dict]) -> list[Dialogue]:
    """Map CANARD-style records (History / Question / Rewrite) onto dialogues.

    Not bit-exact with any official preprocessing. Records whose history is
    empty are skipped, since a dialogue needs at least one context turn.
    """
    out = []
    for k, rec in enumerate(records):
        history = [h for h in rec.get("History", []) if tokenize(h)]
        if not history or not tokenize(rec.get("Question", "")):
            continue
        rewrite = rec.get("Rewrite")
        if rewrite is not None and not tokenize(rewrite):
            rewrite = None
        did = str(rec.get("QuAC_dialog_id", k))
        if "Question_no" in rec:
            did = f"{did}#{rec['Question_no']}"
        out.append(Dialogue.from_texts(history, rec["Question"], rewrite, id=did))
    return out


# --- synthetic corpus -------------------------------------------------------

_MALE = ["tom", "james", "peter", "david", "paul", "mark", "john", "steve", "george", "frank"]
_FEMALE = ["mary", "alice", "susan", "emma", "linda", "lucy", "anna", "kate", "julia", "sarah"]
_ACTIVITIES = ["chess", "tennis", "guitar", "piano", "golf", "football", "poker",
               "table tennis", "ice hockey", "the violin", "video games", "board games"]
_FOODS = ["pizza", "sushi", "pasta", "tacos", "ice cream", "apple pie", "fried rice",
          "green tea", "dark chocolate", "noodle soup", "cheese cake", "curry"]
_CITIES = ["paris", "london", "tokyo", "berlin", "madrid", "rome", "boston",
           "new york", "hong kong", "san diego", "los angeles", "cape town"]
_SUBJECTS = ["biology", "physics", "history", "music", "law", "medicine",
             "philosophy", "economics", "computer science", "art history"]
_MOVIES = ["the matrix", "star wars", "titanic", "jaws", "the godfather",
           "toy story", "casablanca", "alien", "frozen", "inception"]

_FILLERS = [
    "the weather is nice today .",
    "i am not sure about that .",
    "that sounds great .",
    "let me think for a moment .",
    "it was a long week .",
    "ok , thanks for telling me .",
    "good morning to you .",
    "i have no idea .",
    "yes , of course .",
    "really ? tell me more .",
]


def _person(rng: random.Random):
    if rng.random() < 0.5:
        return rng.choice(_MALE), "he", "his", "him"
    return rng.choice(_FEMALE), "she", "her", "her"


def _other_person(rng: random.Random, name: str, subj: str):
    pool = _FEMALE if subj == "he" else _MALE
    return rng.choice([p for p in pool if p != name])


def _tpl_coref_name(rng):
    name, he, _, _ = _person(rng)
    city = rng.choice(_CITIES)
    subject = rng.choice(_SUBJECTS)
    ctx = [f"{name} studied {subject} in {city} ."]
    inc, rw = rng.choice([
        (f"what did {he} do after that ?", f"what did {name} do after that ?"),
        (f"was {he} good at it ?", f"was {name} good at {subject} ?"),
        (f"why did {he} leave ?", f"why did {name} leave {city} ?"),
        (f"did {he} enjoy it ?", f"did {name} enjoy {subject} ?"),
    ])
    return ctx, inc, rw, (name, city, subject)


def _tpl_ellipsis_food(rng):
    food = rng.choice(_FOODS)
    ctx = [f"do you like {food} ?", "yes , i love it ."]
    inc, rw = rng.choice([
        ("where can i buy some ?", f"where can i buy some {food} ?"),
        ("why do you love it ?", f"why do you love {food} ?"),
        ("how often do you eat it ?", f"how often do you eat {food} ?"),
        ("is it expensive ?", f"is {food} expensive ?"),
    ])
    return ctx, inc, rw, (food,)


def _tpl_activity(rng):
    name, he, _, him = _person(rng)
    act = rng.choice(_ACTIVITIES)
    ctx = [f"{name} plays {act} every weekend ."]
    inc, rw = rng.choice([
        (f"how long has {he} been playing ?", f"how long has {name} been playing {act} ?"),
        (f"does {he} play well ?", f"does {name} play {act} well ?"),
        (f"who taught {him} ?", f"who taught {name} {act} ?"),
        ("is it hard to learn ?", f"is {act} hard to learn ?"),
    ])
    return ctx, inc, rw, (name, act)


def _tpl_city(rng):
    name, he, _, _ = _person(rng)
    city = rng.choice(_CITIES)
    ctx = [f"{name} now lives in {city} ."]
    inc, rw = rng.choice([
        ("how is the weather there ?", f"how is the weather in {city} ?"),
        (f"does {he} like it there ?", f"does {name} like it in {city} ?"),
        (f"how long has {he} lived there ?", f"how long has {name} lived in {city} ?"),
        ("what is the food like ?", f"what is the food like in {city} ?"),
    ])
    return ctx, inc, rw, (name, city)


def _tpl_movie(rng):
    name, he, _, _ = _person(rng)
    movie = rng.choice(_MOVIES)
    ctx = [f"what is {name} 's favorite movie ?", f"{he} says it is {movie} ."]
    inc, rw = rng.choice([
        ("who directed it ?", f"who directed {movie} ?"),
        ("when was it released ?", f"when was {movie} released ?"),
        (f"how many times has {he} seen it ?", f"how many times has {name} seen {movie} ?"),
    ])
    return ctx, inc, rw, (name, movie)


_TEMPLATES = [_tpl_coref_name, _tpl_ellipsis_food, _tpl_activity, _tpl_city, _tpl_movie]


def _distractor(rng: random.Random, avoid: set[str], subj_hint: Optional[str]) -> str:
    for _ in range(50):
        kind = rng.randrange(4)
        if kind == 0:
            text = rng.choice(_FILLERS)
        elif kind == 1:
            pool = _FEMALE if subj_hint == "he" else _MALE if subj_hint == "she" else _MALE + _FEMALE
            text = f"{rng.choice(pool)} called me yesterday ."
        elif kind == 2:
            text = f"i had {rng.choice(_FOODS)} for lunch ."
        else:
            text = f"the concert in {rng.choice(_CITIES)} was sold out ."
        if not set(tokenize(text)) & avoid:
            return text
    return "ok ."


def make_synthetic_corpus(seed: int, size: int) -> list[Dialogue]:
    """Template dialogues exhibiting ellipsis and coreference, with distractors.

    Every rewrite copies its restored material from exact context spans, so
    gold edit grids derived from it round-trip.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = random.Random(seed)
    out = []
    for k in range(size):
        tpl = _TEMPLATES[rng.randrange(len(_TEMPLATES))]
        ctx, inc, rw, _ = tpl(rng)
        restored = set(tokenize(rw)) - set(tokenize(inc))
        subj = "he" if " he " in f" {inc} " else "she" if " she " in f" {inc} " else None
        n_distract = rng.choice([0, 1, 1, 2])
        for _ in range(n_distract):
            text = _distractor(rng, restored, subj)
            ctx.insert(rng.randrange(len(ctx) + 1), text)
        out.append(Dialogue.from_texts(ctx, inc, rw, id=f"syn-{seed}-{k}"))
    return out
