import shutil
from pathlib import Path

import pytest

from tikzrig.backends import BackendHub
from tikzrig.config import SandboxSettings, default_config
from tikzrig.sandbox import Sandbox

DATA_DIR = Path(__file__).parent / "data"
MINICORPUS = DATA_DIR / "minicorpus"

HAVE_PDFLATEX = shutil.which("pdflatex") is not None


@pytest.fixture(scope="session")
def stub_sandbox():
    """Sandbox pinned to the bundled simulator toolchain (hermetic)."""
    with Sandbox(SandboxSettings(engine="stub", rasterizer="stub")) as sb:
        yield sb


@pytest.fixture(scope="session")
def auto_sandbox():
    """Sandbox with auto-resolved toolchain (real pdflatex when installed)."""
    with Sandbox(SandboxSettings()) as sb:
        yield sb


@pytest.fixture()
def stub_config():
    cfg = default_config()
    cfg.sandbox.engine = "stub"
    cfg.sandbox.rasterizer = "stub"
    return cfg


@pytest.fixture(scope="session")
def builtin_hub():
    with BackendHub() as hub:
        yield hub


def standalone_doc(body: str, preamble: str = "") -> str:
    return (
        "\\documentclass[border=10pt]{standalone}\n\\usepackage{tikz}\n"
        + preamble
        + "\\begin{document}\n\\begin{tikzpicture}\n"
        + body
        + "\n\\end{tikzpicture}\n\\end{document}\n"
    )
