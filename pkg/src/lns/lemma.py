"""Suffix-tolerant token matching for relation and attribute words."""

from __future__ import annotations

from functools import lru_cache

_SUFFIXES = ("ing", "ed", "es", "s")
_MIN_STEM = 3


def normalize_token(word: str) -> str:
    return word.strip().casefold()


@lru_cache(maxsize=65536)
def lemma_forms(word: str) -> frozenset[str]:
    """The word plus every form reachable by stripping one inflection suffix."""
    w = normalize_token(word)
    forms = {w}
    for suffix in _SUFFIXES:
        if not w.endswith(suffix) or len(w) - len(suffix) < _MIN_STEM:
            continue
        stem = w[: -len(suffix)]
        forms.add(stem)
        if suffix in ("ing", "ed"):
            forms.add(stem + "e")  # hoping -> hope, sacrificed -> sacrifice
            if len(stem) >= 4 and stem[-1] == stem[-2] and stem[-1] not in "aeiou":
                forms.add(stem[:-1])  # stopped -> stop
        if suffix in ("es", "ed") and stem.endswith("i"):
            forms.add(stem[:-1] + "y")  # carries -> carry
    return frozenset(forms)


def tokens_match(a: str, b: str) -> bool:
    return not lemma_forms(a).isdisjoint(lemma_forms(b))
