from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

SOS, EOS, PAD, HANDWRITING = "<sos>", "<eos>", "<pad>", "<handwriting>"
SPECIALS = (SOS, EOS, PAD, HANDWRITING)


class VocabError(ValueError):
    pass


def _escape(sym: str) -> str:
    return {" ": "\\s", "\\": "\\\\"}.get(sym, sym)


def _unescape(tok: str) -> str:
    return {"\\s": " ", "\\\\": "\\"}.get(tok, tok)


class Vocab:
    """Printable single-character symbols followed by the four specials."""

    def __init__(self, symbols: Iterable[str]):
        symbols = tuple(symbols)
        if len(set(symbols)) != len(symbols):
            raise VocabError("duplicate symbols in vocabulary")
        for s in symbols:
            if len(s) != 1 or s == "\n":
                raise VocabError(f"printable symbols must be single characters, got {s!r}")
        self.symbols = symbols
        self.itos = symbols + SPECIALS
        self.stoi = {s: i for i, s in enumerate(self.itos)}

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Vocab":
        return cls(sorted(set("".join(texts))))

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    @property
    def sos(self) -> int:
        return self.stoi[SOS]

    @property
    def eos(self) -> int:
        return self.stoi[EOS]

    @property
    def pad(self) -> int:
        return self.stoi[PAD]

    @property
    def handwriting(self) -> int:
        return self.stoi[HANDWRITING]

    def encode(self, text: str) -> list[int]:
        missing = sorted({ch for ch in text if ch not in self.stoi or len(ch) != 1})
        if missing:
            raise VocabError(f"characters not in vocabulary: {''.join(missing)!r}")
        return [self.stoi[ch] for ch in text]

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.itos[i] for i in ids if i < len(self.symbols))

    # one symbol per line, "\s" for space, specials last
    def dumps(self) -> str:
        return "".join(_escape(s) + "\n" for s in self.itos)

    @classmethod
    def loads(cls, text: str) -> "Vocab":
        toks = [_unescape(t) for t in text.split("\n")]
        if toks and toks[-1] == "":
            toks.pop()
        if tuple(toks[-4:]) != SPECIALS:
            raise VocabError(f"vocabulary file must end with the specials {', '.join(SPECIALS)}")
        return cls(toks[:-4])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


@dataclass(frozen=True)
class TokenSeq:
    """Decoded printable symbol ids; a handwriting verdict carries no symbols."""

    ids: tuple[int, ...]
    ended_with_eos: bool = True
    is_handwriting: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if self.is_handwriting and self.ids:
            raise ValueError("a handwriting TokenSeq holds no symbols")

    @classmethod
    def from_text(cls, text: str, vocab: Vocab) -> "TokenSeq":
        return cls(tuple(vocab.encode(text)))

    @classmethod
    def handwriting_line(cls) -> "TokenSeq":
        return cls((), True, True)

    def text(self, vocab: Vocab) -> str:
        return "" if self.is_handwriting else vocab.decode(self.ids)

    def targets(self, vocab: Vocab) -> list[int]:
        """Training targets: the symbols (or the sentinel) plus a terminal end marker."""
        if self.is_handwriting:
            return [vocab.handwriting, vocab.eos]
        bad = [i for i in self.ids if not 0 <= i < len(vocab.symbols)]
        if bad:
            raise ValueError(f"target contains non-printable ids {bad}")
        if not self.ids:
            raise ValueError("target must be non-empty")
        return list(self.ids) + [vocab.eos]
