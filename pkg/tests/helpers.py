from checkworthy.corpus import Sentence, Token

ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def record_criterion(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, "PASS" if ok else "FAIL", detail))


def make_sentence(sid, speech, pairs, label=None, speaker=None):
    """pairs: list of (text, dep) tuples."""
    return Sentence(
        id=sid,
        speech_id=speech,
        tokens=[Token(text=t, dep=d) for t, d in pairs],
        label=label,
        speaker=speaker,
    )


def simple_sentence(sid, speech, words, label=None, dep="dep"):
    return make_sentence(sid, speech, [(w, dep) for w in words], label=label)
