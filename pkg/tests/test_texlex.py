import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tikzrig.texlex import (
    DEFAULT_EXCLUSION_LIST,
    TokenKind,
    TokenStream,
    extract_document_body,
    lex,
    lex_normalized,
    normalize,
    scan_dependencies,
    shingles,
    token_count,
)


class TestNormalize:
    def test_comment_stripped(self):
        assert normalize("a % note\nb") == "a\nb"

    def test_escaped_percent_preserved(self):
        assert normalize(r"50\% off") == r"50\% off"

    def test_empty(self):
        assert normalize("") == ""

    def test_double_backslash_then_percent_is_comment(self):
        # \\ is a control symbol, so the % after it starts a comment
        assert normalize("a\\\\% gone") == "a\\\\"

    def test_whitespace_collapsed(self):
        assert normalize("a  \t b") == "a b"

    def test_newline_runs_capped_at_two(self):
        assert normalize("a\n\n\n\n\nb") == "a\n\nb"

    def test_idempotent(self):
        src = "x  % c\n\n\n\n y\t z \\% keep"
        assert normalize(normalize(src)) == normalize(src)


class TestExtractDocumentBody:
    def test_full_document(self):
        src = "\\documentclass{standalone}\\begin{document}BODY\\end{document}"
        assert extract_document_body(src) == "BODY"

    def test_fragment_unchanged(self):
        src = "\\begin{tikzpicture}\\end{tikzpicture}"
        assert extract_document_body(src) == src

    def test_begin_without_end_unchanged(self):
        src = "\\begin{document} dangling"
        assert extract_document_body(src) == src


class TestLex:
    def test_golden_tokenization(self):
        stream = lex("\\draw (0,0) -- (1,1);")
        got = [(t.kind, t.lexeme) for t in stream.tokens]
        assert got == [
            (TokenKind.COMMAND, "\\draw"),
            (TokenKind.PUNCTUATION, "("),
            (TokenKind.NUMBER, "0"),
            (TokenKind.PUNCTUATION, ","),
            (TokenKind.NUMBER, "0"),
            (TokenKind.PUNCTUATION, ")"),
            (TokenKind.PUNCTUATION, "--"),
            (TokenKind.PUNCTUATION, "("),
            (TokenKind.NUMBER, "1"),
            (TokenKind.PUNCTUATION, ","),
            (TokenKind.NUMBER, "1"),
            (TokenKind.PUNCTUATION, ")"),
            (TokenKind.PUNCTUATION, ";"),
        ]

    def test_empty_source(self):
        assert len(lex("")) == 0

    def test_deterministic(self):
        assert lex("\\node{x}") == lex("\\node{x}")

    def test_group_and_math_delimiters(self):
        stream = lex("{[$]}")
        kinds = [t.kind for t in stream.tokens]
        assert kinds == [
            TokenKind.GROUP_DELIM,
            TokenKind.GROUP_DELIM,
            TokenKind.MATH_DELIM,
            TokenKind.GROUP_DELIM,
            TokenKind.GROUP_DELIM,
        ]

    def test_control_symbol_is_single_command(self):
        stream = lex(r"\% \\")
        assert [t.lexeme for t in stream.tokens] == ["\\%", "\\\\"]

    def test_decimal_numbers(self):
        assert [t.lexeme for t in lex("0.5 .75 2.").tokens] == ["0.5", ".75", "2."]

    def test_spans_strictly_increasing(self):
        stream = lex("\\draw (0,0) rectangle (2.5,1); % not seen")
        prev_end = -1
        for tok in stream.tokens:
            assert tok.span[0] >= prev_end
            assert tok.span[1] > tok.span[0]
            prev_end = tok.span[1]

    @given(st.text(alphabet=string.ascii_letters + string.digits + "\\{}[]$%().,;- \t\n", max_size=120))
    @settings(max_examples=200, deadline=None)
    def test_roundtrip_modulo_whitespace(self, src):
        norm = normalize(src)
        joined = "".join(t.lexeme for t in lex(norm).tokens)
        assert joined == "".join(norm.split())

    @given(st.text(alphabet=string.printable, max_size=120))
    @settings(max_examples=200, deadline=None)
    def test_lex_normalize_idempotent(self, src):
        norm = normalize(src)
        assert lex(norm) == lex(normalize(norm))

    def test_no_whitespace_or_comment_tokens(self):
        stream = lex(normalize("a b % gone\n  c"))
        for tok in stream.tokens:
            assert tok.lexeme.strip() == tok.lexeme
            assert "%" not in tok.lexeme or tok.lexeme.startswith("\\")


class TestScanDependencies:
    def test_includegraphics_found(self):
        found = scan_dependencies("x \\includegraphics{x.png} y")
        assert len(found) == 1
        assert found[0].command == "includegraphics"
        assert found[0].argument == "x.png"

    def test_clean_code_empty(self):
        assert scan_dependencies("\\begin{tikzpicture}\\draw (0,0);\\end{tikzpicture}") == []

    def test_commented_out_ignored(self):
        assert scan_dependencies("% \\input{old}") == []

    def test_all_escaped_in_comments_empty(self):
        src = "\n".join(f"% \\{name}{{f}}" for name in DEFAULT_EXCLUSION_LIST)
        assert scan_dependencies(src) == []

    def test_prefix_does_not_match(self):
        assert scan_dependencies("\\inputx{y}") == []

    def test_optional_argument(self):
        found = scan_dependencies("\\includegraphics[width=2cm]{fig.pdf}")
        assert found[0].argument == "fig.pdf"

    def test_empty_exclusion_list_rejected(self):
        with pytest.raises(ValueError):
            scan_dependencies("x", [])


class TestShingles:
    def test_short_stream_empty(self):
        stream = TokenStream.from_lexemes([str(i) for i in range(49)])
        assert shingles(stream, 50) == set()

    def test_window_count(self):
        stream = TokenStream.from_lexemes([str(i) for i in range(55)])
        assert len(shingles(stream, 50)) == 6

    def test_deterministic(self):
        a = TokenStream.from_lexemes(list("abcdef"))
        b = TokenStream.from_lexemes(list("abcdef"))
        assert shingles(a, 3) == shingles(b, 3)

    def test_cardinality_bound(self):
        stream = TokenStream.from_lexemes(["x"] * 60)  # all windows identical
        assert len(shingles(stream, 50)) == 1

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            shingles(TokenStream.from_lexemes(["a"]), 0)


def test_token_count_counts_lexed_tokens():
    assert token_count("\\draw (0,0) -- (1,1); % comment") == 13


def test_lex_normalized_composition():
    src = "\\draw  (0,0); % x"
    assert lex_normalized(src) == lex(normalize(src))
