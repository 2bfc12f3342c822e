"""Tokenization, vocabulary with perturbation tokens, and corpus ingestion.

Word-level tokenizer (lowercased, punctuation split off), a frozen
vocabulary with a reserved block of special and perturbation-type ids, and
JSON-lines loaders for perturbation corpora and pronoun benchmarks.
"""

import enum
import json
import re
from dataclasses import dataclass, field

import numpy as np

PAD, CLS, SEP, MASK, UNK = "[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"
SPECIAL_TOKENS = [PAD, CLS, SEP, MASK, UNK]

SLOT_MARKER = "_"

_WORD_RE = re.compile(r"[a-z0-9']+|[^\sa-z0-9']")


class PerturbationKind(enum.Enum):
    """The eight perturbation types; IDENTICAL means no semantic change."""
    IDENTICAL = "IDENTICAL"
    TENSE = "TENSE"
    NUMBER = "NUMBER"
    GENDER = "GENDER"
    VOICE = "VOICE"
    RELCLAUSE = "RELCLAUSE"
    ADVERB = "ADVERB"
    SYNONYM = "SYNONYM"

    @property
    def token(self):
        return f"[{self.value}]"


PERTURBATION_KINDS = list(PerturbationKind)
KIND_INDEX = {k: i for i, k in enumerate(PERTURBATION_KINDS)}


def word_tokens(text):
    """Deterministic lowercased word/punctuation split."""
    return _WORD_RE.findall(text.lower())


class Vocabulary:
    """Dense token -> id map with reserved special and perturbation ids."""

    def __init__(self, words=()):
        self._tokens = list(SPECIAL_TOKENS) + [k.token for k in PERTURBATION_KINDS]
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        self.first_word_id = len(self._tokens)
        for w in words:
            self.add(w)

    def add(self, token):
        if token not in self._ids:
            self._ids[token] = len(self._tokens)
            self._tokens.append(token)
        return self._ids[token]

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def id(self, token):
        return self._ids.get(token, self._ids[UNK])

    def token(self, idx):
        return self._tokens[idx]

    @property
    def pad_id(self):
        return self._ids[PAD]

    @property
    def cls_id(self):
        return self._ids[CLS]

    @property
    def sep_id(self):
        return self._ids[SEP]

    @property
    def mask_id(self):
        return self._ids[MASK]

    @property
    def unk_id(self):
        return self._ids[UNK]

    def kind_id(self, kind):
        return self._ids[kind.token]

    def word_ids(self):
        """Ids of ordinary words (candidates for random-token corruption)."""
        return np.arange(self.first_word_id, len(self._tokens))

    def is_special_id(self, idx):
        return idx < self.first_word_id

    def save(self, path):
        doc = {"format_version": 1, "tokens": self._tokens}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, sort_keys=True, separators=(",", ":"))
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("format_version") != 1:
            raise ValueError(f"vocabulary {path}: unsupported format_version")
        tokens = doc["tokens"]
        expected = list(SPECIAL_TOKENS) + [k.token for k in PERTURBATION_KINDS]
        if tokens[:len(expected)] != expected:
            raise ValueError(f"vocabulary {path}: reserved id block is damaged")
        vocab = cls()
        for t in tokens[len(expected):]:
            vocab.add(t)
        return vocab


def build_vocab(texts):
    """Vocabulary from raw texts, ids assigned in first-appearance order."""
    vocab = Vocabulary()
    for text in texts:
        for tok in word_tokens(text):
            vocab.add(tok)
    return vocab


@dataclass
class TokenSequence:
    """Fixed-length padded id sequence with an attention mask.

    ``content_mask`` marks ordinary word positions (real tokens that are
    neither special nor perturbation ids); downstream similarity metrics
    match only those positions by default.
    """
    ids: np.ndarray
    length: int
    attention_mask: np.ndarray
    content_mask: np.ndarray

    def copy(self):
        return TokenSequence(self.ids.copy(), self.length,
                             self.attention_mask.copy(), self.content_mask.copy())


def encode_tokens(tokens, vocab, max_len):
    """Wrap word tokens as [CLS] ... [SEP] and pad to max_len."""
    needed = len(tokens) + 2
    if needed > max_len:
        raise ValueError(f"sequence of {len(tokens)} tokens overflows max length "
                         f"{max_len} by {needed - max_len} tokens")
    ids = np.full(max_len, vocab.pad_id, dtype=np.int64)
    ids[0] = vocab.cls_id
    for i, tok in enumerate(tokens):
        ids[1 + i] = vocab.id(tok)
    ids[1 + len(tokens)] = vocab.sep_id
    length = needed
    attention = np.zeros(max_len, dtype=bool)
    attention[:length] = True
    content = attention.copy()
    for i in range(length):
        if vocab.is_special_id(int(ids[i])):
            content[i] = False
    return TokenSequence(ids=ids, length=length, attention_mask=attention,
                         content_mask=content)


def tokenize(text, vocab, max_len):
    """Text -> fixed-length TokenSequence; empty text is rejected."""
    if not text or not text.strip():
        raise ValueError("cannot tokenize empty text")
    return encode_tokens(word_tokens(text), vocab, max_len)


def prepend_perturbation(seq, kind, vocab):
    """Insert the perturbation-type token directly after [CLS]."""
    if seq.length + 1 > len(seq.ids):
        raise ValueError(f"no room to prepend a perturbation token: sequence already "
                         f"holds {seq.length} of {len(seq.ids)} positions")
    ids = np.full_like(seq.ids, vocab.pad_id)
    ids[0] = seq.ids[0]
    ids[1] = vocab.kind_id(kind)
    ids[2:seq.length + 1] = seq.ids[1:seq.length]
    length = seq.length + 1
    attention = np.zeros_like(seq.attention_mask)
    attention[:length] = True
    content = np.zeros_like(seq.content_mask)
    content[2:seq.length + 1] = seq.content_mask[1:seq.length]
    return TokenSequence(ids=ids, length=length, attention_mask=attention,
                         content_mask=content)


@dataclass
class PerturbedGroup:
    """One corpus sample: a base sentence plus its perturbation variants."""
    sample_id: str
    base: str
    variants: dict = field(default_factory=dict)  # PerturbationKind -> text

    def available_kinds(self):
        """Kinds usable for this group; IDENTICAL is always eligible."""
        return [PerturbationKind.IDENTICAL] + [k for k in PERTURBATION_KINDS
                                               if k in self.variants]

    def variant_text(self, kind):
        if kind == PerturbationKind.IDENTICAL:
            return self.base
        return self.variants[kind]


@dataclass
class SchemaInstance:
    """A pronoun-disambiguation item: sentence with one slot, two candidates."""
    sentence: str
    candidate1: str
    candidate2: str
    label: int
    twin: str = None

    def candidate(self, which):
        return self.candidate1 if which == 1 else self.candidate2


def _loads_strict(line, lineno, path):
    def reject_dup(pairs):
        d = {}
        for k, v in pairs:
            if k in d:
                raise ValueError(f"{path}:{lineno}: duplicate key {k!r}")
            d[k] = v
        return d

    try:
        obj = json.loads(line, object_pairs_hook=reject_dup)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}:{lineno}: malformed JSON line ({e.msg})") from None
    if not isinstance(obj, dict):
        raise ValueError(f"{path}:{lineno}: expected a JSON object")
    return obj


def load_perturbation_corpus(path, warn=None):
    """Read JSON-lines groups: {"id", "base", "variants": {kind: text}}.

    Unknown perturbation keys are skipped; the skip count is reported through
    ``warn`` (a callable taking a message) and returned groups keep only the
    known kinds.
    """
    groups = []
    skipped = 0
    unchanged = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            obj = _loads_strict(line, lineno, path)
            if "base" not in obj:
                raise ValueError(f"{path}:{lineno}: missing field 'base'")
            base_tokens = word_tokens(obj["base"])
            variants = {}
            for key, text in (obj.get("variants") or {}).items():
                try:
                    kind = PerturbationKind(key)
                except ValueError:
                    skipped += 1
                    continue
                if kind == PerturbationKind.IDENTICAL:
                    raise ValueError(f"{path}:{lineno}: IDENTICAL may not appear as a "
                                     f"stored variant")
                if word_tokens(text) == base_tokens:
                    unchanged += 1
                variants[kind] = text
            groups.append(PerturbedGroup(sample_id=str(obj.get("id", lineno)),
                                         base=obj["base"], variants=variants))
    if warn is not None:
        if skipped:
            warn(f"{path}: skipped {skipped} variants with unknown perturbation keys")
        if unchanged:
            warn(f"{path}: {unchanged} variants tokenize identically to their base")
    return groups


def load_benchmark(path):
    """Read JSON-lines schema instances with a literal '_' pronoun slot."""
    instances = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            obj = _loads_strict(line, lineno, path)
            for fieldname in ("sentence", "candidate1", "candidate2", "label"):
                if fieldname not in obj:
                    raise ValueError(f"{path}:{lineno}: missing field {fieldname!r}")
            sentence = obj["sentence"]
            slots = sum(1 for t in word_tokens(sentence) if t == SLOT_MARKER)
            if slots != 1:
                raise ValueError(f"{path}:{lineno}: sentence must contain exactly one "
                                 f"'{SLOT_MARKER}' slot, found {slots}")
            c1, c2 = obj["candidate1"], obj["candidate2"]
            if not c1.strip() or not c2.strip():
                raise ValueError(f"{path}:{lineno}: candidates must be non-empty")
            if word_tokens(c1) == word_tokens(c2):
                raise ValueError(f"{path}:{lineno}: candidates must be distinct")
            label = obj["label"]
            if label not in (1, 2):
                raise ValueError(f"{path}:{lineno}: label must be 1 or 2, got {label!r}")
            instances.append(SchemaInstance(sentence=sentence, candidate1=c1,
                                            candidate2=c2, label=int(label),
                                            twin=obj.get("twin")))
    return instances


def save_benchmark(path, instances):
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            obj = {"sentence": inst.sentence, "candidate1": inst.candidate1,
                   "candidate2": inst.candidate2, "label": inst.label}
            if inst.twin is not None:
                obj["twin"] = inst.twin
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def save_perturbation_corpus(path, groups):
    with open(path, "w", encoding="utf-8") as f:
        for g in groups:
            obj = {"id": g.sample_id, "base": g.base,
                   "variants": {k.value: v for k, v in g.variants.items()}}
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def corpus_sentences(groups):
    """All sentences of a corpus (bases first, then variants, stable order)."""
    out = []
    for g in groups:
        out.append(g.base)
        for kind in PERTURBATION_KINDS:
            if kind in g.variants:
                out.append(g.variants[kind])
    return out


def benchmark_texts(instances):
    """Sentence and candidate texts, for vocabulary building."""
    out = []
    for inst in instances:
        out.append(inst.sentence.replace(SLOT_MARKER, " "))
        out.append(inst.candidate1)
        out.append(inst.candidate2)
        if inst.twin:
            out.append(inst.twin.replace(SLOT_MARKER, " "))
    return out
