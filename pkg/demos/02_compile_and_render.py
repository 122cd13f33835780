"""Sandboxed compilation and rasterization.

The sandbox prefers a real pdflatex/pdftoppm pair when installed and falls
back to the bundled deterministic simulator toolchain, so this demo runs
anywhere.  Every job gets a fresh scratch directory, a scrubbed
environment, and a hard timeout enforced on the whole process group.
"""

from pathlib import Path

from tikzrig.config import SandboxSettings
from tikzrig.sandbox import CompileRequest, Sandbox, wrap_standalone

fragment = r"""\begin{tikzpicture}
\draw (0,0) rectangle (3,2);
\draw (0,0) -- (3,2);
\fill (1.5,1) circle (0.15);
\end{tikzpicture}"""

# bare fragments are wrapped into standalone documents before compiling
document = wrap_standalone(fragment)
print(document.splitlines()[0], "...")

with Sandbox(SandboxSettings()) as sandbox:
    print(f"engine:     {sandbox.engine_id}")
    print(f"rasterizer: {sandbox.rasterizer_id}")

    outcome = sandbox.compile(CompileRequest(document, timeout=10.0))
    print(f"status: {outcome.status}  ({outcome.duration:.2f}s)")

    image = sandbox.rasterize(outcome.pdf_ref, dpi=300)
    out = Path("demo_render.png")
    image.save(out)
    print(f"rendered {image.width}x{image.height} px at 300 DPI -> {out}")

    # a failing document: the log excerpt centers on the first error line
    broken = document.replace(
        "\\begin{tikzpicture}",
        "\\begin{tikzpicture}\n\\begin{pgfonlayer}{background}\\fill (0,0) rectangle (1,1);\\end{pgfonlayer}",
    )
    failed = sandbox.compile(CompileRequest(broken, timeout=10.0))
    print(f"\nbroken document -> {failed.status}")
    error_lines = [ln for ln in failed.log_excerpt.splitlines() if ln.startswith("!")]
    print("first error line:", error_lines[0] if error_lines else "(none)")
