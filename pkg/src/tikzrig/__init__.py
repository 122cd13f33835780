"""tikzrig: compile/render sandbox, verifiable rewards, corpus curation
and evaluation for image-to-TikZ program synthesis.

The package is organized around small, pure modules:

- :mod:`tikzrig.texlex` — TeX normalization, lexing, dependency scanning, shingles
- :mod:`tikzrig.sandbox` — standalone wrapping, sandboxed compilation, rasterization
- :mod:`tikzrig.imgmetrics` — trim-and-align, SSIM, cosine, hinge/kernel mappings
- :mod:`tikzrig.codemetrics` — extended edit distance, TED kernel, CrystalBLEU
- :mod:`tikzrig.reward` — reward composition, GRPO advantage/surrogate/KL terms
- :mod:`tikzrig.backends` — wire-protocol clients with deterministic builtins
- :mod:`tikzrig.dataengine` — the execution-centric curation pipeline
- :mod:`tikzrig.dscloop` — the dual self-consistency rollout simulator
- :mod:`tikzrig.evaluate` — the ALL/SUCCESS evaluation harness
"""

from .config import Config, default_config, load_config
from .errors import TikzRigError

__version__ = "0.1.0"

__all__ = ["Config", "default_config", "load_config", "TikzRigError", "__version__"]
