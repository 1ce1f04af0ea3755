"""Tokenizer for the Java-like mini-language."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List

from ..errors import ParseError

KEYWORDS = frozenset({
    "class", "public", "private", "protected", "static", "final", "void", "if", "else",
    "return", "throw", "throws", "new", "true", "false", "null", "this", "extends",
    "implements", "import", "package", "abstract", "synchronized",
})

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<char>'(?:[^'\\\n]|\\.)')
  | (?P<number>\d+(?:\.\d+)?[lLfFdD]?)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||\+=|[-+*/%<>=!.,;(){}\[\]@:?])
""", re.VERBOSE | re.DOTALL)

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", '"': '"', "'": "'", "0": "\0"}


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, string, char, number, op, eof
    text: str
    start: int
    end: int
    line: int
    column: int

    @property
    def value(self) -> str:
        if self.kind in ("string", "char"):
            return unescape(self.text[1:-1])
        return self.text


def unescape(body: str) -> str:
    out, i = [], 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(_ESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "line_comment", "block_comment"):
            if kind == "ident" and chunk in KEYWORDS:
                kind = "keyword"
            tokens.append(Token(kind, chunk, pos, m.end(), line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", pos, pos, line, pos - line_start + 1))
    return tokens
