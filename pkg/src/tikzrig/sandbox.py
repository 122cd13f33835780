"""Sandboxed LaTeX compilation, PDF rasterization and log handling.

Each compile job runs in its own scratch directory with a scrubbed
environment, shell-escape disabled, and a hard wall-clock budget enforced
by killing the whole process group.  The engine and rasterizer are plain
subprocess commands; with ``engine="auto"`` a real ``pdflatex`` is used
when present and the bundled deterministic simulator toolchain
(:mod:`tikzrig.stubtex`) otherwise, so the full stack stays runnable on
machines without a TeX installation.
"""

from __future__ import annotations

import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .config import SandboxSettings
from .errors import NoDrawableContent, RenderFailed
from .raster import RasterImage, load as load_raster

KILL_GRACE_SECONDS = 0.5

STATUS_SUCCESS = "success"
STATUS_COMPILE_ERROR = "compile-error"
STATUS_TIMEOUT = "timeout"
STATUS_TOOLCHAIN_MISSING = "toolchain-missing"


@dataclass(frozen=True)
class CompileRequest:
    document: str
    timeout: float = 10.0
    job_id: str = ""

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class CompileOutcome:
    status: str
    duration: float
    log_excerpt: str
    pdf_ref: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_SUCCESS


_TIKZPICTURE = re.compile(r"\\begin\{tikzpicture\}")
_USETIKZLIB = re.compile(r"^[ \t]*\\usetikzlibrary\{[^}]*\}[ \t]*$", re.MULTILINE)


def wrap_standalone(fragment: str, border_pt: float = 10.0) -> str:
    """Wrap a bare tikzpicture fragment into a standalone document.

    Full documents (anything carrying a documentclass or a document
    environment) pass through unchanged.  ``\\usetikzlibrary`` lines found
    in the fragment are hoisted into the preamble.
    """
    if "\\documentclass" in fragment or "\\begin{document}" in fragment:
        return fragment
    if not _TIKZPICTURE.search(fragment):
        raise NoDrawableContent("no tikzpicture or document environment found")
    libs = _USETIKZLIB.findall(fragment)
    body = _USETIKZLIB.sub("", fragment).strip("\n")
    border = f"{border_pt:g}pt"
    preamble = [f"\\documentclass[border={border}]{{standalone}}", "\\usepackage{tikz}"]
    preamble += [lib.strip() for lib in libs]
    return "\n".join(preamble + ["\\begin{document}", body, "\\end{document}"]) + "\n"


def extract_error_excerpt(full_log: str, max_bytes: int = 4096) -> str:
    """Window of the compiler log around the first error line.

    TeX error lines start with "!"; when none is present the tail of the
    log is returned instead.  The result is at most ``max_bytes`` long.
    """
    if max_bytes <= 0 or not full_log:
        return ""
    data = full_log.encode("utf-8", errors="replace")
    match = re.search(rb"^!.*$", data, re.MULTILINE)
    if match is None:
        window = data[-max_bytes:]
    else:
        start = max(0, match.start() - max_bytes // 4)
        window = data[start:start + max_bytes]
    return window.decode("utf-8", errors="replace")


def pdf_page_size(pdf_bytes: bytes) -> tuple[float, float]:
    """Width/height in points of the first page, read from the MediaBox."""
    m = re.search(
        rb"/MediaBox\s*\[\s*([\d.+-]+)\s+([\d.+-]+)\s+([\d.+-]+)\s+([\d.+-]+)\s*\]",
        pdf_bytes,
    )
    if m is None:
        raise RenderFailed("no MediaBox found in PDF")
    llx, lly, urx, ury = (float(m.group(i)) for i in range(1, 5))
    return urx - llx, ury - lly


def _stub_command(mode: str) -> list[str]:
    return [sys.executable, "-m", "tikzrig.stubtex", mode]


def resolve_engine(spec: str) -> list[str]:
    """Turn the config engine spec into a command prefix, or [] if missing."""
    if spec == "stub":
        return _stub_command("engine")
    if spec == "auto":
        found = shutil.which("pdflatex")
        return [found] if found else _stub_command("engine")
    found = shutil.which(spec)
    return [found] if found else []


def resolve_rasterizer(spec: str) -> list[str]:
    if spec == "stub":
        return _stub_command("raster")
    if spec == "auto":
        for cand in ("pdftoppm", "pdftocairo"):
            found = shutil.which(cand)
            if found:
                return [found]
        return _stub_command("raster")
    found = shutil.which(spec)
    return [found] if found else []


class Sandbox:
    """Runs compile and rasterize jobs behind a bounded worker pool."""

    def __init__(self, settings: SandboxSettings | None = None):
        self.settings = settings or SandboxSettings()
        self._engine = resolve_engine(self.settings.engine)
        self._rasterizer = resolve_rasterizer(self.settings.rasterizer)
        self._root = Path(tempfile.mkdtemp(prefix="tikzrig-sandbox-"))
        self._artifacts = self._root / "artifacts"
        self._artifacts.mkdir()
        jobs = self.settings.jobs or os.cpu_count() or 1
        self._pool = ThreadPoolExecutor(max_workers=jobs)

    # identity strings echoed into manifests/reports
    @property
    def engine_id(self) -> str:
        return self._identity(self._engine, "stubtex-engine")

    @property
    def rasterizer_id(self) -> str:
        return self._identity(self._rasterizer, "stubtex-raster")

    @staticmethod
    def _identity(cmd: list[str], stub_label: str) -> str:
        if not cmd:
            return "missing"
        if len(cmd) >= 3 and cmd[1:3] == ["-m", "tikzrig.stubtex"]:
            return stub_label  # stable across machines and python paths
        return " ".join(cmd)

    @property
    def toolchain_available(self) -> bool:
        return bool(self._engine)

    def close(self) -> None:
        self._pool.shutdown(wait=True)
        if not self.settings.keep_artifacts:
            shutil.rmtree(self._root, ignore_errors=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _scrubbed_env(self) -> dict:
        allow = set(self.settings.env_allowlist) | {"PYTHONPATH"}
        return {k: v for k, v in os.environ.items() if k in allow}

    def compile(self, req: CompileRequest) -> CompileOutcome:
        """Compile one document; never raises for per-document failures."""
        if not self._engine:
            return CompileOutcome(STATUS_TOOLCHAIN_MISSING, 0.0, "engine binary not found")
        job = req.job_id or uuid.uuid4().hex
        workdir = Path(tempfile.mkdtemp(prefix="job-", dir=self._root))
        try:
            (workdir / "main.tex").write_text(req.document, encoding="utf-8")
            cmd = self._engine + ["-interaction=nonstopmode", "-no-shell-escape", "main.tex"]
            start = time.monotonic()
            proc = subprocess.Popen(
                cmd,
                cwd=workdir,
                env=self._scrubbed_env(),
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                start_new_session=True,
            )
            timed_out = False
            try:
                stdout, _ = proc.communicate(timeout=req.timeout)
            except subprocess.TimeoutExpired:
                timed_out = True
                stdout = self._kill_tree(proc)
            duration = time.monotonic() - start

            log_path = workdir / "main.log"
            log = log_path.read_text(errors="replace") if log_path.exists() else ""
            if not log:
                log = (stdout or b"").decode("utf-8", errors="replace")
            excerpt = extract_error_excerpt(log, self.settings.max_log_bytes)

            pdf_path = workdir / "main.pdf"
            if timed_out:
                return CompileOutcome(STATUS_TIMEOUT, duration, excerpt)
            if proc.returncode == 0 and pdf_path.exists():
                dest = self._artifacts / f"{job}.pdf"
                shutil.move(str(pdf_path), dest)
                return CompileOutcome(STATUS_SUCCESS, duration, excerpt, pdf_ref=dest)
            return CompileOutcome(STATUS_COMPILE_ERROR, duration, excerpt)
        finally:
            if not self.settings.keep_artifacts:
                shutil.rmtree(workdir, ignore_errors=True)

    @staticmethod
    def _kill_tree(proc: subprocess.Popen) -> bytes:
        try:
            os.killpg(proc.pid, signal.SIGTERM)
        except ProcessLookupError:
            pass
        try:
            stdout, _ = proc.communicate(timeout=KILL_GRACE_SECONDS)
            return stdout or b""
        except subprocess.TimeoutExpired:
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            stdout, _ = proc.communicate()
            return stdout or b""

    def compile_many(self, reqs: Sequence[CompileRequest]) -> list[CompileOutcome]:
        """Compile a batch concurrently; results keep input order."""
        return list(self._pool.map(self.compile, reqs))

    def rasterize(self, pdf_ref, dpi: int | None = None, channels: str = "gray") -> RasterImage:
        """Rasterize the first page of a PDF at the requested DPI.

        Deterministic for fixed (pdf bytes, dpi); alpha is flattened onto
        white by the raster loader.
        """
        dpi = dpi or self.settings.dpi
        pdf_path = Path(pdf_ref)
        if not pdf_path.exists():
            raise RenderFailed(f"no such PDF: {pdf_ref}")
        if not self._rasterizer:
            raise RenderFailed("rasterizer binary not found")
        gray = channels == "gray"
        with tempfile.TemporaryDirectory(dir=self._root) as tmp:
            prefix = Path(tmp) / "page"
            cmd = self._rasterizer + ["-f", "1", "-l", "1", "-r", str(int(dpi)), "-png"]
            if gray:
                cmd.append("-gray")
            cmd += [str(pdf_path), str(prefix)]
            try:
                proc = subprocess.run(
                    cmd, env=self._scrubbed_env(), capture_output=True,
                    timeout=self.settings.render_timeout,
                )
            except subprocess.TimeoutExpired as exc:
                raise RenderFailed(f"rasterizer exceeded {self.settings.render_timeout}s") from exc
            if proc.returncode != 0:
                raise RenderFailed(proc.stderr.decode(errors="replace")[:500])
            pages = sorted(Path(tmp).glob("page*"))
            if not pages:
                raise RenderFailed("rasterizer produced no output")
            return load_raster(pages[0], dpi=float(dpi), gray=gray)

    def compile_and_render(
        self, document: str, timeout: float | None = None, dpi: int | None = None
    ) -> tuple[CompileOutcome, Optional[RasterImage]]:
        """Convenience: compile then rasterize on success."""
        outcome = self.compile(CompileRequest(document, timeout or self.settings.compile_timeout))
        if not outcome.ok:
            return outcome, None
        try:
            image = self.rasterize(outcome.pdf_ref, dpi=dpi)
        except RenderFailed:
            return CompileOutcome(STATUS_COMPILE_ERROR, outcome.duration, outcome.log_excerpt), None
        return outcome, image
