"""Small text utilities shared across ingestion, clause splitting, and filtering."""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(r"[A-Za-z]+(?=n't\b)|n't|\w+|[^\w\s]", re.UNICODE)


def tokenize_with_spans(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Tokenize into (token, (start, end)) pairs over character offsets.

    Contracted negations are split into host + ``n't`` ("didn't" ->
    "did", "n't") so the negation particle can be tagged on its own; all
    other punctuation becomes single-character tokens.
    """
    out: list[tuple[str, tuple[int, int]]] = []
    for m in _TOKEN_RE.finditer(text):
        out.append((m.group(), (m.start(), m.end())))
    return out


def tokenize(text: str) -> list[str]:
    return [tok for tok, _ in tokenize_with_spans(text)]


# Irregular inflections mapped to their base form. Deliberately small: the
# lemmatizer only has to be *consistent* between the two strings it is used
# to compare, not linguistically complete.
_IRREGULAR = {
    "was": "be", "were": "be", "been": "be", "is": "be", "are": "be", "am": "be",
    "did": "do", "does": "do", "done": "do",
    "had": "have", "has": "have",
    "went": "go", "gone": "go", "goes": "go",
    "ran": "run", "slept": "sleep", "shot": "shoot", "spent": "spend",
    "came": "come", "saw": "see", "seen": "see", "took": "take", "taken": "take",
    "got": "get", "gotten": "get", "made": "make", "said": "say", "told": "tell",
    "knew": "know", "known": "know", "thought": "think", "found": "find",
    "gave": "give", "given": "give", "left": "leave", "felt": "feel",
    "kept": "keep", "began": "begin", "begun": "begin", "brought": "bring",
    "bought": "buy", "caught": "catch", "taught": "teach", "fought": "fight",
    "stood": "stand", "understood": "understand", "heard": "hear",
    "held": "hold", "led": "lead", "met": "meet", "paid": "pay",
    "sat": "sit", "sold": "sell", "sent": "send", "built": "build",
    "lost": "lose", "won": "win", "wore": "wear", "worn": "wear",
    "wrote": "write", "written": "write", "drove": "drive", "driven": "drive",
    "ate": "eat", "eaten": "eat", "fell": "fall", "fallen": "fall",
    "flew": "fly", "flown": "fly", "grew": "grow", "grown": "grow",
    "hid": "hide", "hidden": "hide", "broke": "break", "broken": "break",
    "chose": "choose", "chosen": "choose", "spoke": "speak", "spoken": "speak",
    "threw": "throw", "thrown": "throw", "woke": "wake", "woken": "wake",
    "sang": "sing", "sung": "sing", "rang": "ring", "rung": "ring",
    "swam": "swim", "swum": "swim", "drank": "drink", "drunk": "drink",
    "rode": "ride", "ridden": "ride", "rose": "rise", "risen": "rise",
    "stole": "steal", "stolen": "steal", "struck": "strike",
    "drew": "draw", "drawn": "draw", "lay": "lie", "lain": "lie", "laid": "lay",
    "cut": "cut", "hit": "hit", "hurt": "hurt", "put": "put", "read": "read",
}


def _undouble(base: str) -> str:
    # stopped -> stop, but called -> call (l/s/z doubles are usually lexical)
    if len(base) > 2 and base[-1] == base[-2] and base[-1] not in "lsz":
        return base[:-1]
    return base


def simple_lemma(token: str) -> str:
    """Crude suffix-stripping lemmatizer; adequate for token-overlap scoring."""
    w = token.lower()
    if w in _IRREGULAR:
        return _IRREGULAR[w]
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("ied") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("ing") and len(w) > 5:
        return _undouble(w[:-3])
    if w.endswith("ed") and len(w) > 3:
        return _undouble(w[:-2])
    if w.endswith("es") and len(w) > 4:
        return w[:-2]
    if w.endswith("s") and len(w) > 3 and not w.endswith("ss"):
        return w[:-1]
    return w


def lemma_set(text: str) -> set[str]:
    return {simple_lemma(tok) for tok in tokenize(text) if any(c.isalnum() for c in tok)}


def normalize_inference(text: str) -> str:
    """Normalization used for deduplication and verbatim-repetition checks.

    Lowercase, collapse whitespace, strip a terminal period: trivially
    different generations ("take a deep breath" vs "take a deep breath.")
    compare equal.
    """
    out = " ".join(text.lower().split())
    if out.endswith("."):
        out = out[:-1].rstrip()
    return out


def collapse_spaces(text: str) -> str:
    return " ".join(text.split())
