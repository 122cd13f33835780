"""TeX-aware source normalization, lexing, dependency scanning and shingling.

The token stream produced here is the shared substrate for corpus
deduplication and for all code-side similarity metrics.  The lexer is
deliberately forgiving: it never rejects input, does no macro expansion,
and does not attempt catcode-accurate behaviour.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence


class TokenKind(str, Enum):
    COMMAND = "command"
    GROUP_DELIM = "group-delimiter"
    MATH_DELIM = "math-delimiter"
    TEXT_WORD = "text-word"
    NUMBER = "number"
    PUNCTUATION = "punctuation"


@dataclass(frozen=True)
class TexToken:
    kind: TokenKind
    lexeme: str
    span: tuple[int, int]  # byte offsets into the normalized source


@dataclass(frozen=True)
class TokenStream:
    tokens: tuple[TexToken, ...]
    source_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def lexemes(self) -> list[str]:
        return [t.lexeme for t in self.tokens]

    @classmethod
    def from_lexemes(cls, lexemes: Sequence[str], source_id: str = "") -> "TokenStream":
        """Build a synthetic stream (used by tests and oracles)."""
        toks = []
        pos = 0
        for lx in lexemes:
            toks.append(TexToken(_classify(lx), lx, (pos, pos + len(lx))))
            pos += len(lx) + 1
        return cls(tuple(toks), source_id)


@dataclass(frozen=True)
class DependencyFinding:
    command: str  # macro name without the backslash
    argument: str
    span: tuple[int, int]


# Macros whose presence marks a sample as not self-contained.
DEFAULT_EXCLUSION_LIST = (
    "includegraphics",
    "input",
    "include",
    "bibliography",
    "import",
    "lstinputlisting",
)

_DOC_BEGIN = re.compile(r"\\begin\{document\}")
_DOC_END = re.compile(r"\\end\{document\}")


def extract_document_body(source: str) -> str:
    """Return the region between \\begin{document} and \\end{document}.

    If either marker is missing the input is returned unchanged, so the
    function is total over arbitrary fragments.
    """
    begin = _DOC_BEGIN.search(source)
    if begin is None:
        return source
    end = None
    for m in _DOC_END.finditer(source, begin.end()):
        end = m  # keep the last one
    if end is None:
        return source
    return source[begin.end():end.start()]


def _strip_comment(line: str) -> str:
    """Cut an unescaped % and everything after it.

    A % is a comment start iff preceded by an even number of backslashes
    (\\% is the escaped percent; \\\\% is a newline command then a comment).
    """
    i = 0
    n = len(line)
    while i < n:
        c = line[i]
        if c == "\\":
            i += 2  # skip the escaped character, whatever it is
            continue
        if c == "%":
            return line[:i]
        i += 1
    return line


def normalize(source: str) -> str:
    """Canonicalize TeX source: drop comments, collapse whitespace.

    Unescaped %-to-end-of-line comments are removed, runs of spaces and
    tabs collapse to a single space, trailing blanks are stripped, and
    runs of more than two newlines collapse to exactly two.
    """
    lines = [_strip_comment(ln) for ln in source.split("\n")]
    lines = [re.sub(r"[ \t]+", " ", ln).rstrip() for ln in lines]
    text = "\n".join(lines)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text


_NUMBER_HEAD = re.compile(r"\d|\.\d")


def _classify(lexeme: str) -> TokenKind:
    if lexeme.startswith("\\"):
        return TokenKind.COMMAND
    if lexeme in "{}[]":
        return TokenKind.GROUP_DELIM
    if lexeme == "$":
        return TokenKind.MATH_DELIM
    if re.fullmatch(r"\d+(\.\d*)?|\.\d+", lexeme):
        return TokenKind.NUMBER
    if lexeme.isalpha():
        return TokenKind.TEXT_WORD
    return TokenKind.PUNCTUATION


def lex(source: str, source_id: str = "") -> TokenStream:
    """Tokenize already-normalized TeX source.

    Control sequences become single command tokens (backslash included in
    the lexeme), braces/brackets are group delimiters, $ is a math
    delimiter, and remaining text splits into words, numbers, and runs of
    one repeated punctuation character.  Unknown bytes fall through to
    punctuation; the lexer never fails.
    """
    tokens: list[TexToken] = []
    i = 0
    n = len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        start = i
        if c == "\\":
            i += 1
            if i < n and source[i].isalpha():
                while i < n and source[i].isalpha():
                    i += 1
            elif i < n and not source[i].isspace():
                i += 1  # control symbol: \% \\ \, ... (never spans whitespace)
            tokens.append(TexToken(TokenKind.COMMAND, source[start:i], (start, i)))
        elif c in "{}[]":
            i += 1
            tokens.append(TexToken(TokenKind.GROUP_DELIM, c, (start, i)))
        elif c == "$":
            i += 1
            tokens.append(TexToken(TokenKind.MATH_DELIM, c, (start, i)))
        elif c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            i += 1
            seen_dot = c == "."
            while i < n and (source[i].isdigit() or (source[i] == "." and not seen_dot)):
                if source[i] == ".":
                    seen_dot = True
                i += 1
            # a bare trailing dot like "1." keeps the dot in the number
            tokens.append(TexToken(TokenKind.NUMBER, source[start:i], (start, i)))
        elif c.isalpha():
            while i < n and source[i].isalpha():
                i += 1
            tokens.append(TexToken(TokenKind.TEXT_WORD, source[start:i], (start, i)))
        else:
            # maximal run of the same punctuation character ("--" is one token)
            while i < n and source[i] == c:
                i += 1
            tokens.append(TexToken(TokenKind.PUNCTUATION, source[start:i], (start, i)))
    return TokenStream(tuple(tokens), source_id)


def lex_normalized(source: str, source_id: str = "") -> TokenStream:
    """Convenience composition: lex(normalize(source))."""
    return lex(normalize(source), source_id)


def scan_dependencies(
    source: str, exclusion_list: Sequence[str] = DEFAULT_EXCLUSION_LIST
) -> list[DependencyFinding]:
    """Find occurrences of external-file macros in the (normalized) source.

    Commented-out occurrences never match because the scan runs on the
    comment-stripped normalization of the input.
    """
    if not exclusion_list:
        raise ValueError("exclusion_list must be non-empty")
    text = normalize(source)
    names = "|".join(re.escape(name) for name in exclusion_list)
    pattern = re.compile(
        r"\\(" + names + r")(?![A-Za-z])(?:\s*\[[^\]]*\])?(?:\s*\{([^}]*)\})?"
    )
    findings = []
    for m in pattern.finditer(text):
        findings.append(
            DependencyFinding(
                command=m.group(1),
                argument=m.group(2) or "",
                span=(m.start(), m.end()),
            )
        )
    return findings


def _fingerprint(lexemes: Sequence[str]) -> int:
    digest = hashlib.blake2b("\x1f".join(lexemes).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def shingles(stream: TokenStream, n: int) -> set[int]:
    """Fingerprints of every contiguous n-token window of the stream.

    Streams shorter than n yield the empty set.  Fingerprints are 64-bit
    blake2b hashes of the joined lexemes; hash collisions can only cause
    conservative over-removal in dedup, which is acceptable there.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lexemes = stream.lexemes()
    if len(lexemes) < n:
        return set()
    return {_fingerprint(lexemes[i:i + n]) for i in range(len(lexemes) - n + 1)}


def token_count(source: str) -> int:
    """Number of lexer tokens in the normalized source."""
    return len(lex_normalized(source))
