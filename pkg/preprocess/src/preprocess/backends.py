"""Parser backends behind one interface, pinned by a lock file.

The lock file (`parser.lock`, KEY=VALUE) names the backend and its exact
version. Golden-file tests compare against that identifier and fail loudly
when the resolved backend drifts, so tag-inventory changes are caught
before they corrupt downstream tag sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import builtin_parser


class ParserUnavailable(RuntimeError):
    pass


class LockError(ValueError):
    pass


@dataclass
class ParsedToken:
    text: str
    dep: str


class BuiltinBackend:
    """Lexicon-and-position heuristic tagger; no external dependencies."""

    name = "builtin"

    @property
    def version(self) -> str:
        return builtin_parser.BUILTIN_VERSION

    def identifier(self) -> str:
        return f"{self.name}-{self.version}"

    def tag_inventory(self) -> tuple[str, ...]:
        return builtin_parser.TAG_INVENTORY

    def parse(self, text: str) -> list[list[ParsedToken]]:
        sentences = []
        for sentence in builtin_parser.segment(text):
            tokens = builtin_parser.tokenize(sentence)
            if not tokens:
                continue
            tags = builtin_parser.tag_tokens(tokens)
            sentences.append([ParsedToken(t, d) for t, d in zip(tokens, tags)])
        return sentences


class SpacyBackend:
    """Off-the-shelf statistical parser; used when spaCy and a model exist."""

    name = "spacy"

    def __init__(self, model: str = "en_core_web_sm"):
        try:
            import spacy
        except ImportError as exc:
            raise ParserUnavailable("spacy is not installed") from exc
        try:
            self._nlp = spacy.load(model)
        except OSError as exc:
            raise ParserUnavailable(f"spacy model {model!r} is not installed") from exc
        self._spacy_version = spacy.__version__
        self._model = model
        self._model_version = self._nlp.meta.get("version", "unknown")

    @property
    def version(self) -> str:
        return f"{self._spacy_version}/{self._model}-{self._model_version}"

    def identifier(self) -> str:
        return f"{self.name}-{self.version}"

    def tag_inventory(self) -> tuple[str, ...]:
        return tuple(sorted(self._nlp.get_pipe("parser").labels))

    def parse(self, text: str) -> list[list[ParsedToken]]:
        doc = self._nlp(text)
        return [
            [ParsedToken(tok.text, tok.dep_) for tok in sent if not tok.is_space]
            for sent in doc.sents
            if any(not tok.is_space for tok in sent)
        ]


def load_lock(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LockError(f"{path}:{lineno}: expected KEY=VALUE")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    if "backend" not in values or "version" not in values:
        raise LockError(f"{path}: lock file must pin 'backend' and 'version'")
    return values


def backend_from_lock(path: str | Path):
    """Resolve the pinned backend; mismatched versions are hard errors."""
    lock = load_lock(path)
    if lock["backend"] == "builtin":
        backend = BuiltinBackend()
    elif lock["backend"] == "spacy":
        backend = SpacyBackend(lock.get("model", "en_core_web_sm"))
    else:
        raise LockError(f"unknown parser backend {lock['backend']!r}")
    if backend.version != lock["version"]:
        raise LockError(
            f"parser version drift: lock pins {lock['backend']}-{lock['version']} "
            f"but the resolved backend is {backend.identifier()}; regenerate the "
            "golden fixtures and update the lock deliberately"
        )
    return backend
