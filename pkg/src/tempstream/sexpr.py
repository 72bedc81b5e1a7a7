"""S-expression reader shared by the domain, problem and stream file parsers."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

# Characters that may appear inside a symbol besides letters and digits.
_SYMBOL_PUNCT = set("-_?:.=<>+*/!@#$%&[]^~|'")


@dataclass(frozen=True)
class SourceText:
    content: str
    origin: str = "<inline>"

    def __post_init__(self):
        if not self.origin:
            raise ValueError("origin must be non-empty")

    @classmethod
    def from_path(cls, path) -> "SourceText":
        path = Path(path)
        return cls(path.read_text(encoding="utf-8"), str(path))


class ParseError(Exception):
    """A located error raised by any of the readers; printed as ``file:line:col: message``."""

    def __init__(self, message: str, line: int = 0, col: int = 0, origin: str = "<inline>"):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.origin = origin

    def __str__(self):
        return f"{self.origin}:{self.line}:{self.col}: {self.message}"


class Symbol(str):
    """A lowercased token that remembers where it came from."""

    line: int
    col: int

    def __new__(cls, text: str, line: int = 0, col: int = 0):
        obj = super().__new__(cls, text)
        obj.line = line
        obj.col = col
        return obj


class SList(list):
    """A parenthesised list that remembers the location of its opening paren."""

    def __init__(self, items=(), line: int = 0, col: int = 0):
        super().__init__(items)
        self.line = line
        self.col = col


def _tokenize(src: SourceText):
    text = src.content
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
        elif ch.isspace():
            i += 1
            col += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            yield ch, line, col
            i += 1
            col += 1
        elif ch.isalnum() or ch in _SYMBOL_PUNCT:
            start, start_col = i, col
            while i < n and (text[i].isalnum() or text[i] in _SYMBOL_PUNCT):
                i += 1
                col += 1
            yield Symbol(text[start:i].lower(), line, start_col), line, start_col
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col, src.origin)


def read_all(src: SourceText) -> list:
    """Read every top-level form in ``src``.

    Symbols are lowercased (PDDL identifiers are case-insensitive).
    """
    stack: list[SList] = []
    forms: list = []
    for tok, line, col in _tokenize(src):
        if tok == "(":
            stack.append(SList(line=line, col=col))
        elif tok == ")":
            if not stack:
                raise ParseError(f"unbalanced parentheses at line {line}", line, col, src.origin)
            done = stack.pop()
            (stack[-1] if stack else forms).append(done)
        else:
            (stack[-1] if stack else forms).append(tok)
    if stack:
        open_ = stack[-1]
        raise ParseError(
            f"unbalanced parentheses at line {open_.line}", open_.line, open_.col, src.origin
        )
    return forms


def location(item) -> tuple[int, int]:
    return getattr(item, "line", 0), getattr(item, "col", 0)
