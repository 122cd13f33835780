"""Deterministic simulator toolchain for hermetic runs.

``python -m tikzrig.stubtex engine <flags> main.tex`` mimics the CLI shape
of ``pdflatex -interaction=nonstopmode``: it type-checks a small TikZ
subset, reproduces the error messages the rest of the stack keys on
(undefined control sequences, missing packages/environments, undeclared
pgf layers), honours the classic ``\\loop\\iftrue\\repeat`` hang, and on
success emits a real single-page PDF whose vector content mirrors the
parsed picture.  ``python -m tikzrig.stubtex raster`` mimics ``pdftoppm``
and renders that PDF back to a grayscale PNG at a requested DPI.

This is a simulator for tests and demos, not a TeX implementation; when a
real toolchain is installed the sandbox prefers it automatically.
"""

from __future__ import annotations

import json
import re
import sys
import time
from pathlib import Path

CM_TO_PT = 28.3465  # picture units are centimetres; PDF space is points

KNOWN_COMMANDS = {
    "documentclass", "usepackage", "usetikzlibrary", "begin", "end",
    "draw", "fill", "filldraw", "path", "node", "coordinate", "clip",
    "shade", "shadedraw", "pgfdeclarelayer", "pgfsetlayers", "tikzset",
    "definecolor", "color", "textbf", "textit", "textrm", "texttt",
    "small", "large", "Large", "tiny", "scriptsize", "footnotesize",
    "centering", "linewidth", "textwidth", "item", "label", "caption",
    "loop", "iftrue", "repeat", "relax", "par",
    "bibliography", "bibliographystyle", "includegraphics", "input",
    "include", "import", "lstinputlisting",
    "alpha", "beta", "gamma", "delta", "theta", "pi", "mu", "sigma", "omega",
    "sin", "cos", "tan", "cdot", "times", "frac", "sqrt", "sum", "int",
    "leq", "geq", "infty", "ldots", "dots", "rightarrow", "leftarrow",
    "mathbf", "mathrm", "text", "emph",
}

KNOWN_PACKAGES = {"tikz", "xcolor", "amsmath", "amssymb", "amsfonts", "standalone"}

KNOWN_ENVIRONMENTS = {"document", "tikzpicture", "pgfonlayer", "scope", "center"}

KNOWN_TIKZ_LIBRARIES = {
    "backgrounds", "arrows", "arrows.meta", "calc", "positioning",
    "shapes", "shapes.geometric", "decorations", "patterns", "fit",
}

BANNER = "This is stubtex, Version 0.1 (tikzrig simulator)\n"


class StubTexError(Exception):
    def __init__(self, log_lines: list[str]):
        super().__init__("\n".join(log_lines))
        self.log_lines = log_lines


# --------------------------------------------------------------------------
# document checking


def _strip_comments(src: str) -> str:
    out = []
    for line in src.split("\n"):
        i, n = 0, len(line)
        while i < n:
            if line[i] == "\\":
                i += 2
                continue
            if line[i] == "%":
                line = line[:i]
                break
            i += 1
        out.append(line)
    return "\n".join(out)


def _check_document(src: str) -> dict:
    """Validate the source; returns parse context or raises StubTexError."""
    text = _strip_comments(src)

    if "\\begin{document}" not in text:
        raise StubTexError(["! LaTeX Error: Missing \\begin{document}."])

    packages = set(re.findall(r"\\usepackage(?:\[[^\]]*\])?\{([^}]*)\}", text))
    packages = {p.strip() for group in packages for p in group.split(",")}
    for pkg in sorted(packages):
        if pkg and pkg not in KNOWN_PACKAGES:
            raise StubTexError([
                f"! LaTeX Error: File `{pkg}.sty' not found.",
                "",
                "Type X to quit or <RETURN> to proceed,",
            ])

    libraries = set()
    for group in re.findall(r"\\usetikzlibrary\{([^}]*)\}", text):
        libraries |= {x.strip() for x in group.split(",")}
    for lib in sorted(libraries):
        if lib and lib not in KNOWN_TIKZ_LIBRARIES:
            raise StubTexError([
                f"! I can't find file `tikzlibrary{lib}.code.tex'.",
            ])

    declared_layers = set(re.findall(r"\\pgfdeclarelayer\{([^}]*)\}", text))

    for env in re.findall(r"\\begin\{([A-Za-z*]+)\}", text):
        if env not in KNOWN_ENVIRONMENTS:
            raise StubTexError([
                f"! LaTeX Error: Environment {env} undefined.",
                "",
                f"l.1 \\begin{{{env}}}",
            ])

    for m in re.finditer(r"\\begin\{pgfonlayer\}\{([^}]*)\}", text):
        layer = m.group(1)
        ok = (
            layer == "main"
            or layer in declared_layers
            or (layer == "background" and "backgrounds" in libraries)
        )
        if not ok:
            raise StubTexError([
                f"! Package pgf Error: Sorry, the requested layer '{layer}' could not be found.",
                "",
                "See the pgf package documentation for explanation.",
            ])

    for m in re.finditer(r"\\([A-Za-z]+)", text):
        if m.group(1) not in KNOWN_COMMANDS:
            line_no = text.count("\n", 0, m.start()) + 1
            raise StubTexError([
                "! Undefined control sequence.",
                f"l.{line_no} \\{m.group(1)}",
            ])

    border = 10.0
    mclass = re.search(r"\\documentclass\[([^\]]*)\]", text)
    if mclass:
        mb = re.search(r"border\s*=\s*([\d.]+)\s*pt", mclass.group(1))
        if mb:
            border = float(mb.group(1))
    return {"text": text, "border": border}


# --------------------------------------------------------------------------
# tikz drawing subset -> op list (coordinates in PDF points, y up)

_COORD = r"\(\s*(-?[\d.]+)\s*,\s*(-?[\d.]+)\s*\)"


def _parse_picture(text: str) -> list[dict]:
    ops: list[dict] = []
    for body in re.findall(r"\\begin\{tikzpicture\}(?:\[[^\]]*\])?(.*?)\\end\{tikzpicture\}", text, re.DOTALL):
        for stmt in _statements(body):
            ops.extend(_parse_statement(stmt))
    return ops


def _statements(body: str):
    for raw in body.split(";"):
        stmt = raw.strip()
        if stmt:
            yield stmt


def _pt(x: str, y: str) -> tuple[float, float]:
    return float(x) * CM_TO_PT, float(y) * CM_TO_PT


def _parse_statement(stmt: str) -> list[dict]:
    head = re.match(r"\\(draw|fill|filldraw|path|node|coordinate)\b", stmt)
    if head is None:
        return []
    cmd = head.group(1)
    if cmd == "coordinate":
        return []
    if cmd == "node":
        m = re.search(r"at\s*" + _COORD, stmt)
        x, y = _pt(m.group(1), m.group(2)) if m else (0.0, 0.0)
        mtext = re.search(r"\{([^{}]*)\}\s*$", stmt)
        label = mtext.group(1) if mtext else ""
        ops = [{"dot": [x, y, 1.6]}]
        if label:
            w = max(4.0, 4.5 * len(label))
            ops.append({"box": [x - w / 2, y - 3.5, w, 7.0]})
        return ops
    filled = cmd in ("fill", "filldraw")
    spec = stmt[head.end():]
    spec = re.sub(r"^\s*\[[^\]]*\]", "", spec)  # drop style options
    return _parse_path(spec, filled)


_PATH_TOKEN = re.compile(
    r"(?P<cx>-?[\d.]+)\s*,\s*(?P<cy>-?[\d.]+)\s*\)"      # tail of "(x, y)"
    r"|(?P<circle>circle\s*(?:\(\s*(?P<r>[\d.]+)\s*(?:cm)?\s*\)|\[\s*radius\s*=\s*(?P<r2>[\d.]+)\s*\]))"
    r"|(?P<rect>rectangle)"
    r"|(?P<grid>grid)"
    r"|(?P<cycle>cycle)"
)


def _parse_path(spec: str, filled: bool) -> list[dict]:
    """Walk a path spec left to right collecting polyline points and shapes."""
    ops: list[dict] = []
    segment: list[tuple[float, float]] = []
    pending: str | None = None  # a rectangle/grid keyword awaiting its corner

    def flush():
        if len(segment) >= 2:
            ops.append({"line": [[px, py] for px, py in segment]})

    for m in _PATH_TOKEN.finditer(spec):
        if m.group("cx") is not None:
            pt = _pt(m.group("cx"), m.group("cy"))
            if pending and segment:
                _emit_corner_shape(ops, segment[-1], pt, pending, filled)
                flush()
                segment = [pt]  # shape moves the current point, draws no join
                pending = None
            else:
                segment.append(pt)
        elif m.group("circle"):
            if segment:
                r = float(m.group("r") or m.group("r2")) * CM_TO_PT
                cx, cy = segment[-1]
                ops.append({"circle": [cx, cy, r], "fill": filled})
        elif m.group("rect"):
            pending = "rect"
        elif m.group("grid"):
            pending = "grid"
        elif m.group("cycle"):
            if len(segment) >= 2:
                segment.append(segment[0])
    flush()
    if not ops and len(segment) == 1 and filled:
        ops.append({"dot": [segment[0][0], segment[0][1], 1.0]})
    return ops


def _emit_corner_shape(ops: list[dict], p1, p2, kind: str, filled: bool) -> None:
    x1, y1 = p1
    x2, y2 = p2
    if kind == "rect":
        ops.append({
            "rect": [min(x1, x2), min(y1, y2), abs(x2 - x1), abs(y2 - y1)],
            "fill": filled,
        })
        return
    step = CM_TO_PT  # grid: unit-step rules between the two corners
    x = min(x1, x2)
    while x <= max(x1, x2) + 1e-6:
        ops.append({"line": [[x, min(y1, y2)], [x, max(y1, y2)]]})
        x += step
    y = min(y1, y2)
    while y <= max(y1, y2) + 1e-6:
        ops.append({"line": [[min(x1, x2), y], [max(x1, x2), y]]})
        y += step


def _ops_bbox(ops: list[dict]) -> tuple[float, float, float, float]:
    xs, ys = [], []
    for op in ops:
        if "line" in op:
            for x, y in op["line"]:
                xs.append(x)
                ys.append(y)
        elif "rect" in op or "box" in op:
            x, y, w, h = op.get("rect", op.get("box"))
            xs += [x, x + w]
            ys += [y, y + h]
        elif "circle" in op:
            cx, cy, r = op["circle"]
            xs += [cx - r, cx + r]
            ys += [cy - r, cy + r]
        elif "dot" in op:
            x, y, r = op["dot"]
            xs += [x - r, x + r]
            ys += [y - r, y + r]
    if not xs:
        return 0.0, 0.0, 0.0, 0.0
    return min(xs), min(ys), max(xs), max(ys)


# --------------------------------------------------------------------------
# PDF emission


def _circle_bezier(cx: float, cy: float, r: float) -> str:
    k = 0.5523 * r
    return (
        f"{cx + r:.2f} {cy:.2f} m "
        f"{cx + r:.2f} {cy + k:.2f} {cx + k:.2f} {cy + r:.2f} {cx:.2f} {cy + r:.2f} c "
        f"{cx - k:.2f} {cy + r:.2f} {cx - r:.2f} {cy + k:.2f} {cx - r:.2f} {cy:.2f} c "
        f"{cx - r:.2f} {cy - k:.2f} {cx - k:.2f} {cy - r:.2f} {cx:.2f} {cy - r:.2f} c "
        f"{cx + k:.2f} {cy - r:.2f} {cx + r:.2f} {cy - k:.2f} {cx + r:.2f} {cy:.2f} c "
    )


def _content_stream(ops: list[dict]) -> str:
    parts = ["0.8 w"]
    for op in ops:
        if "line" in op:
            pts = op["line"]
            parts.append(f"{pts[0][0]:.2f} {pts[0][1]:.2f} m")
            for x, y in pts[1:]:
                parts.append(f"{x:.2f} {y:.2f} l")
            parts.append("S")
        elif "rect" in op:
            x, y, w, h = op["rect"]
            parts.append(f"{x:.2f} {y:.2f} {w:.2f} {h:.2f} re " + ("f" if op.get("fill") else "S"))
        elif "box" in op:
            x, y, w, h = op["box"]
            parts.append(f"{x:.2f} {y:.2f} {w:.2f} {h:.2f} re S")
        elif "circle" in op:
            cx, cy, r = op["circle"]
            parts.append(_circle_bezier(cx, cy, r) + ("f" if op.get("fill") else "S"))
        elif "dot" in op:
            x, y, r = op["dot"]
            parts.append(_circle_bezier(x, y, r) + "f")
    return "\n".join(parts)


def emit_pdf(ops: list[dict], border_pt: float) -> bytes:
    """Build a single-page PDF: vector content plus an embedded op-list."""
    x0, y0, x1, y1 = _ops_bbox(ops)
    if x1 - x0 < 1e-9 and y1 - y0 < 1e-9:
        x1 = x0 + 1.0
        y1 = y0 + 1.0
    width = (x1 - x0) + 2 * border_pt
    height = (y1 - y0) + 2 * border_pt
    dx, dy = border_pt - x0, border_pt - y0

    shifted = _shift_ops(ops, dx, dy)
    content = _content_stream(shifted).encode("ascii")
    spec = json.dumps(
        {"w": round(width, 2), "h": round(height, 2), "ops": shifted},
        sort_keys=True, separators=(",", ":"),
    ).encode("ascii")

    objects = [
        b"<< /Type /Catalog /Pages 2 0 R >>",
        b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>",
        (
            f"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {width:.2f} {height:.2f}] "
            f"/Contents 4 0 R /Resources << >> >>"
        ).encode("ascii"),
        b"<< /Length " + str(len(content)).encode() + b" >>\nstream\n" + content + b"\nendstream",
        b"<< /Type /StubSpec /Length " + str(len(spec)).encode() + b" >>\nstream\n" + spec + b"\nendstream",
    ]
    out = bytearray(b"%PDF-1.4\n")
    offsets = []
    for idx, obj in enumerate(objects, start=1):
        offsets.append(len(out))
        out += f"{idx} 0 obj\n".encode() + obj + b"\nendobj\n"
    xref_at = len(out)
    out += f"xref\n0 {len(objects) + 1}\n".encode()
    out += b"0000000000 65535 f \n"
    for off in offsets:
        out += f"{off:010d} 00000 n \n".encode()
    out += (
        f"trailer\n<< /Size {len(objects) + 1} /Root 1 0 R >>\nstartxref\n{xref_at}\n%%EOF\n"
    ).encode()
    return bytes(out)


def _shift_ops(ops: list[dict], dx: float, dy: float) -> list[dict]:
    def mv(x, y):
        return [round(x + dx, 3), round(y + dy, 3)]

    shifted = []
    for op in ops:
        if "line" in op:
            shifted.append({"line": [mv(x, y) for x, y in op["line"]]})
        elif "rect" in op:
            x, y, w, h = op["rect"]
            shifted.append({"rect": mv(x, y) + [round(w, 3), round(h, 3)], "fill": bool(op.get("fill"))})
        elif "box" in op:
            x, y, w, h = op["box"]
            shifted.append({"box": mv(x, y) + [round(w, 3), round(h, 3)]})
        elif "circle" in op:
            cx, cy, r = op["circle"]
            shifted.append({"circle": mv(cx, cy) + [round(r, 3)], "fill": bool(op.get("fill"))})
        elif "dot" in op:
            x, y, r = op["dot"]
            shifted.append({"dot": mv(x, y) + [round(r, 3)]})
    return shifted


# --------------------------------------------------------------------------
# raster side


def extract_spec(pdf_bytes: bytes) -> dict:
    m = re.search(rb"/Type /StubSpec /Length (\d+) >>\nstream\n", pdf_bytes)
    if m is None:
        raise ValueError("not a stubtex PDF (no embedded spec)")
    start = m.end()
    return json.loads(pdf_bytes[start:start + int(m.group(1))])


def render_spec(spec: dict, dpi: int):
    """Rasterize the op list to a grayscale array in [0,1] (white bg)."""
    import numpy as np
    from PIL import Image, ImageDraw

    scale = dpi / 72.0
    wpx = max(1, round(spec["w"] * scale))
    hpx = max(1, round(spec["h"] * scale))
    img = Image.new("L", (wpx, hpx), 255)
    drw = ImageDraw.Draw(img)
    lw = max(1, round(0.8 * scale))

    def xy(x, y):
        return (x * scale, hpx - y * scale)

    for op in spec["ops"]:
        if "line" in op:
            pts = [xy(x, y) for x, y in op["line"]]
            drw.line(pts, fill=0, width=lw)
        elif "rect" in op:
            x, y, w, h = op["rect"]
            p0, p1 = xy(x, y + h), xy(x + w, y)
            if op.get("fill"):
                drw.rectangle([p0, p1], fill=0)
            else:
                drw.rectangle([p0, p1], outline=0, width=lw)
        elif "box" in op:
            x, y, w, h = op["box"]
            drw.rectangle([xy(x, y + h), xy(x + w, y)], outline=0, width=lw)
        elif "circle" in op:
            cx, cy, r = op["circle"]
            p0, p1 = xy(cx - r, cy + r), xy(cx + r, cy - r)
            if op.get("fill"):
                drw.ellipse([p0, p1], fill=0)
            else:
                drw.ellipse([p0, p1], outline=0, width=lw)
        elif "dot" in op:
            x, y, r = op["dot"]
            drw.ellipse([xy(x - r, y + r), xy(x + r, y - r)], fill=0)
    return np.asarray(img, dtype=np.float64) / 255.0


# --------------------------------------------------------------------------
# CLI entry points


def _engine_main(argv: list[str]) -> int:
    tex_file = None
    outdir = Path(".")
    for arg in argv:
        if arg.startswith("-output-directory="):
            outdir = Path(arg.split("=", 1)[1])
        elif not arg.startswith("-"):
            tex_file = Path(arg)
    if tex_file is None or not tex_file.exists():
        sys.stderr.write("stubtex engine: no input file\n")
        return 2
    src = tex_file.read_text(encoding="utf-8", errors="replace")
    base = outdir / tex_file.stem
    log_lines = [BANNER, f"(./{tex_file.name}"]

    if re.search(r"\\loop\s*\\iftrue\s*\\repeat", src):
        # emulate a runaway document; the sandbox must kill us
        while True:
            time.sleep(0.25)

    try:
        ctx = _check_document(src)
    except StubTexError as err:
        log = "\n".join(log_lines + err.log_lines + ["No pages of output."]) + "\n"
        base.with_suffix(".log").write_text(log)
        sys.stdout.write(log)
        return 1

    ops = _parse_picture(ctx["text"])
    pdf = emit_pdf(ops, ctx["border"])
    base.with_suffix(".pdf").write_bytes(pdf)
    log = "\n".join(log_lines + [")", f"Output written on {base.stem}.pdf (1 page)."]) + "\n"
    base.with_suffix(".log").write_text(log)
    sys.stdout.write(log)
    return 0


def _raster_main(argv: list[str]) -> int:
    dpi = 150
    positional = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "-r":
            dpi = int(float(argv[i + 1]))
            i += 2
        elif arg in ("-f", "-l"):
            i += 2
        elif arg.startswith("-"):
            i += 1
        else:
            positional.append(arg)
            i += 1
    if len(positional) != 2:
        sys.stderr.write("stubtex raster: usage [-r dpi] in.pdf outprefix\n")
        return 2
    pdf_path, prefix = Path(positional[0]), positional[1]
    try:
        spec = extract_spec(pdf_path.read_bytes())
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"stubtex raster: {exc}\n")
        return 1
    arr = render_spec(spec, dpi)
    import numpy as np
    from PIL import Image

    img = Image.fromarray(np.clip(arr * 255.0 + 0.5, 0, 255).astype(np.uint8), mode="L")
    img.save(f"{prefix}-1.png")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in ("engine", "raster"):
        sys.stderr.write("usage: python -m tikzrig.stubtex {engine|raster} ...\n")
        return 2
    if argv[0] == "engine":
        return _engine_main(argv[1:])
    return _raster_main(argv[1:])


if __name__ == "__main__":
    sys.exit(main())
