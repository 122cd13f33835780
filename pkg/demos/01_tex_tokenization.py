"""TeX normalization, lexing, dependency scanning and shingling.

The token stream produced here is the substrate for corpus dedup and for
every code-side similarity metric.
"""

from tikzrig.texlex import (
    extract_document_body,
    lex_normalized,
    normalize,
    scan_dependencies,
    shingles,
)

source = r"""
\documentclass{standalone}
\begin{document}
\begin{tikzpicture}
  % axes            <- comments disappear during normalization
  \draw (0,0) -- (2.5,0);
  \draw (0,0) -- (0,1.5);
  \node at (1.25,-0.4) {time};   50\% of the label survives too
\end{tikzpicture}
\end{document}
"""

# 1. isolate the document body, then canonicalize whitespace and comments
body = extract_document_body(source)
print("normalized body:")
print(normalize(body))

# 2. lex into typed tokens; the lexer never rejects input
stream = lex_normalized(body, source_id="demo")
print("\nfirst ten tokens:")
for tok in stream.tokens[:10]:
    print(f"  {tok.kind.value:<16} {tok.lexeme!r}")
print(f"  ... {len(stream)} tokens total")

# 3. n-gram fingerprints: the unit of near-duplicate detection
print(f"\n5-gram shingles: {len(shingles(stream, 5))}")
print(f"50-gram shingles: {len(shingles(stream, 50))} (stream shorter than 50 tokens)")

# 4. external-file references make a sample non-self-contained
dirty = r"\includegraphics[width=3cm]{plot.png} \input{macros}"
for finding in scan_dependencies(dirty):
    print(f"dependency: \\{finding.command}{{{finding.argument}}} at bytes {finding.span}")
