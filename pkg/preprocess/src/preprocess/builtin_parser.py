"""Deterministic heuristic English tagger used as the built-in backend.

The corpus schema needs one dependency tag per token, not a full tree, so
a lexicon-and-position cascade over a CLEAR-style tag inventory is enough
to produce plausible, fully reproducible output. The pinned version below
must be bumped on ANY behavioural change; the golden-file tests exist to
catch silent drift.
"""

from __future__ import annotations

import re

BUILTIN_VERSION = "1.0.0"

TAG_INVENTORY = (
    "ROOT", "acomp", "advmod", "amod", "attr", "aux", "cc", "compound",
    "conj", "dep", "det", "dobj", "intj", "neg", "nsubj", "nummod",
    "pobj", "poss", "prep", "punct", "xcomp",
)

DETERMINERS = {
    "the", "a", "an", "this", "that", "these", "those", "some", "any",
    "each", "every", "all", "both", "another", "no", "such",
}
POSSESSIVES = {"my", "your", "his", "her", "its", "our", "their", "'s"}
PRONOUNS = {
    "i", "we", "you", "he", "she", "it", "they", "me", "us", "him",
    "them", "who", "everyone", "everybody", "nobody", "someone",
}
AUXILIARIES = {
    "is", "are", "was", "were", "am", "be", "been", "being",
    "have", "has", "had", "do", "does", "did",
    "will", "would", "can", "could", "shall", "should", "may", "might",
    "must", "wo", "ca", "sha", "'re", "'ve", "'ll", "'d", "'m",
}
COPULAS = {"is", "are", "was", "were", "am", "be", "been", "being", "'re", "'m"}
PREPOSITIONS = {
    "of", "in", "for", "with", "on", "at", "by", "from", "about", "into",
    "over", "under", "between", "through", "during", "against", "across",
    "behind", "beyond", "without", "within", "since", "until", "like",
    "than", "after", "before",
}
CONJUNCTIONS = {"and", "or", "but", "nor", "yet"}
NEGATIONS = {"not", "n't", "never"}
INTERJECTIONS = {"oh", "wow", "hey", "folks", "yes"}
ADVERBS = {
    "very", "too", "also", "again", "now", "then", "here", "there",
    "nearly", "almost", "just", "only", "even", "still", "so", "together",
    "ago", "back", "away", "ever", "always", "today", "tomorrow", "tonight",
    "yesterday", "instead", "overseas",
}
NUMBER_WORDS = {
    "zero", "one", "two", "three", "four", "five", "six", "seven",
    "eight", "nine", "ten", "eleven", "twelve", "twenty", "thirty",
    "forty", "fifty", "hundred", "thousand", "million", "billion",
    "trillion", "dozen", "half",
}
VERB_LEXICON = {
    "have", "has", "had", "make", "makes", "made", "get", "gets", "got",
    "take", "takes", "took", "taken", "spend", "spends", "spent", "go",
    "goes", "went", "gone", "come", "comes", "came", "say", "says",
    "said", "see", "sees", "saw", "seen", "know", "knows", "knew",
    "want", "wants", "wanted", "believe", "believes", "believed",
    "think", "thinks", "thought", "win", "wins", "won", "lose", "loses",
    "lost", "fight", "fights", "fought", "build", "builds", "built",
    "bring", "brings", "brought", "put", "puts", "cut", "cuts", "pay",
    "pays", "paid", "give", "gives", "gave", "given", "create",
    "creates", "created", "support", "supports", "supported", "protect",
    "protects", "protected", "defend", "defends", "defended", "grow",
    "grows", "grew", "grown", "rise", "rises", "rose", "risen", "fall",
    "falls", "fell", "fallen", "double", "doubles", "doubled",
    "increase", "increases", "increased", "promise", "promises",
    "promised", "share", "shares", "shared", "need", "needs", "needed",
    "work", "works", "worked", "vote", "votes", "voted", "stand",
    "stands", "stood", "run", "runs", "ran", "keep", "keeps", "kept",
    "let", "lets", "tell", "tells", "told", "stop", "stops", "stopped",
    "raise", "raises", "raised", "owe", "owes", "owed", "deserve",
    "deserves", "deserved", "send", "sends", "sent", "accept", "accepts",
    "accepted", "rebuild", "rebuilds", "rebuilt", "restore", "restores",
    "restored",
}
ADJ_LEXICON = {
    "great", "good", "bad", "new", "old", "big", "small", "strong",
    "weak", "fair", "unfair", "many", "few", "high", "low", "last",
    "next", "american", "foreign", "total", "hard", "broken", "safe",
    "proud", "same", "real", "better", "worse", "best", "worst", "free",
    "huge", "enormous", "failed", "average", "middle", "whole", "single",
    "easy", "wrong", "working",
}
ADJ_SUFFIXES = ("ous", "ful", "ive", "ible", "able", "ic", "ish", "less")
ABBREVIATIONS = {
    "mr.", "mrs.", "ms.", "dr.", "st.", "sen.", "gov.", "rep.", "u.s.",
    "d.c.", "jr.", "sr.", "inc.", "no.", "vs.",
}

_CONTRACTION_RE = re.compile(r"(?i)(n't|'re|'ve|'ll|'d|'m|'s)$")
_NUMERIC_RE = re.compile(r"^[0-9][0-9,.]*$")
_PUNCT_CHARS = ".,!?;:\"'()[]{}—–-$%"


# --- tokenization ---------------------------------------------------------

def tokenize(sentence: str) -> list[str]:
    """Whitespace split, then peel punctuation, currency, and contractions."""
    tokens: list[str] = []
    for chunk in sentence.split():
        tokens.extend(_split_chunk(chunk))
    return tokens


def _split_chunk(chunk: str) -> list[str]:
    if not chunk:
        return []
    if chunk.lower() in ABBREVIATIONS:
        return [chunk]
    if chunk[0] in _PUNCT_CHARS and len(chunk) > 1:
        return [chunk[0]] + _split_chunk(chunk[1:])
    if chunk[-1] in _PUNCT_CHARS and len(chunk) > 1:
        return _split_chunk(chunk[:-1]) + [chunk[-1]]
    match = _CONTRACTION_RE.search(chunk)
    if match and match.start() > 0:
        return [chunk[: match.start()], chunk[match.start():]]
    for i in range(1, len(chunk) - 1):
        ch = chunk[i]
        if ch in _PUNCT_CHARS and ch not in "'-" \
                and not (ch in ".," and _NUMERIC_RE.match(chunk)):
            return _split_chunk(chunk[:i]) + _split_chunk(chunk[i:])
    return [chunk]


# --- sentence segmentation ---------------------------------------------------

_BOUNDARY_RE = re.compile(r"([.!?]+)(\s+|$)")


def segment(text: str) -> list[str]:
    """Split on terminal punctuation and blank lines; abbreviation-aware."""
    sentences: list[str] = []
    for paragraph in re.split(r"\n\s*\n", text):
        flat = " ".join(paragraph.split())
        if not flat:
            continue
        start = 0
        for match in _BOUNDARY_RE.finditer(flat):
            end = match.end(1)
            preceding = flat[start:end].rsplit(None, 1)
            last_word = preceding[-1].lower() if preceding else ""
            if last_word in ABBREVIATIONS:
                continue
            sentence = flat[start:end].strip()
            if sentence:
                sentences.append(sentence)
            start = match.end()
        tail = flat[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


# --- coarse classes and the tag cascade ---------------------------------------

def _is_punct(token: str) -> bool:
    return all(ch in _PUNCT_CHARS for ch in token) and token not in ("$", "%")


def _is_number(token: str) -> bool:
    low = token.lower()
    return bool(_NUMERIC_RE.match(token)) or low in NUMBER_WORDS or token in ("$", "%")


def _is_verb(token: str) -> bool:
    low = token.lower()
    if low in VERB_LEXICON:
        return True
    return len(low) > 5 and (low.endswith("ing") or low.endswith("ed")) \
        and low not in ADJ_LEXICON


def _is_adjective(token: str) -> bool:
    low = token.lower()
    return low in ADJ_LEXICON or (len(low) > 4 and low.endswith(ADJ_SUFFIXES))


NOT_ADVERBS = {
    "family", "rally", "ally", "assembly", "supply", "monopoly", "early",
    "apply", "reply", "fly", "likely", "only", "italy", "belly",
}


def _is_adverb(token: str) -> bool:
    low = token.lower()
    if low in NOT_ADVERBS:
        return False
    return low in ADVERBS or (len(low) > 3 and low.endswith("ly"))


def _coarse(token: str) -> str:
    low = token.lower()
    if _is_punct(token):
        return "PUNCT"
    if low in NEGATIONS:
        return "NEG"
    if low in POSSESSIVES:
        return "POSS"
    if low in DETERMINERS:
        return "DET"
    if low in CONJUNCTIONS:
        return "CC"
    if low == "to":
        return "TO"
    if low in AUXILIARIES:
        return "AUX"
    if low in PREPOSITIONS:
        return "PREP"
    if low in PRONOUNS:
        return "PRON"
    if _is_number(token):
        return "NUM"
    if low in INTERJECTIONS:
        return "INTJ"
    if _is_adverb(token):
        return "ADV"
    if _is_verb(token):
        return "VERB"
    if _is_adjective(token):
        return "ADJ"
    return "NOUN"


def _find_root(classes: list[str]) -> int:
    verbs = [i for i, c in enumerate(classes) if c == "VERB"]
    if verbs:
        return verbs[0]
    aux = [i for i, c in enumerate(classes) if c == "AUX"]
    if aux:
        # head of the first auxiliary chain ("will do", "has been")
        root = aux[0]
        aux_set = set(aux)
        while root + 1 in aux_set:
            root += 1
        return root
    nouns = [i for i, c in enumerate(classes) if c in ("NOUN", "PRON", "NUM")]
    if nouns:
        return nouns[0]
    return 0


def _demote_nominal_verbs(classes: list[str]) -> None:
    # "no promise", "about spending": lexicon verbs in nominal slots
    for i in range(1, len(classes)):
        if classes[i] == "VERB" and classes[i - 1] in (
                "DET", "POSS", "ADJ", "NUM", "PREP"):
            classes[i] = "NOUN"


def tag_tokens(tokens: list[str]) -> list[str]:
    """One CLEAR-style dependency tag per token, fully deterministic."""
    n = len(tokens)
    classes = [_coarse(t) for t in tokens]
    _demote_nominal_verbs(classes)
    root = _find_root(classes)
    tags = [""] * n

    nominal = {"NOUN", "PRON", "NUM"}
    subject_taken = False
    object_taken = False
    open_prep: int | None = None
    cc_since_root = False

    for i, cls in enumerate(classes):
        if i == root:
            tags[i] = "ROOT"
            open_prep = None
            continue
        token_low = tokens[i].lower()
        if cls == "PUNCT":
            tags[i] = "punct"
        elif cls == "NEG":
            tags[i] = "neg"
        elif cls == "POSS":
            tags[i] = "poss"
        elif cls == "DET":
            tags[i] = "det"
        elif cls == "CC":
            tags[i] = "cc"
            if i > root:
                cc_since_root = True
        elif cls == "TO":
            if i + 1 < n and classes[i + 1] in ("VERB", "AUX"):
                tags[i] = "aux"
            else:
                tags[i] = "prep"
                open_prep = i
        elif cls == "AUX":
            later_verb = any(c in ("VERB", "AUX") for c in classes[i + 1:]) and i < root
            tags[i] = "aux" if later_verb or i < root else "xcomp"
        elif cls == "PREP":
            tags[i] = "prep"
            open_prep = i
        elif cls == "VERB":
            tags[i] = "conj" if cc_since_root else "xcomp"
        elif cls == "ADV":
            tags[i] = "advmod"
        elif cls == "INTJ":
            tags[i] = "intj"
        elif cls == "NUM":
            tags[i] = "nummod"
        elif cls == "ADJ":
            next_nominal = i + 1 < n and classes[i + 1] in nominal | {"ADJ"}
            if next_nominal:
                tags[i] = "amod"
            elif i > root and classes[root] in ("AUX", "VERB") \
                    and tokens[root].lower() in COPULAS:
                tags[i] = "acomp"
            else:
                tags[i] = "amod"
        elif cls in nominal:
            if i + 1 < n and classes[i + 1] in nominal and classes[i + 1] != "NUM":
                tags[i] = "compound"
            elif open_prep is not None:
                tags[i] = "pobj"
                open_prep = None
            elif i < root and not subject_taken:
                tags[i] = "nsubj"
                subject_taken = True
            elif i < root:
                tags[i] = "dep"
            elif cc_since_root and object_taken:
                tags[i] = "conj"
            elif tokens[root].lower() in COPULAS:
                tags[i] = "attr"
                object_taken = True
            else:
                tags[i] = "dobj"
                object_taken = True
        else:
            tags[i] = "dep"
    return tags
