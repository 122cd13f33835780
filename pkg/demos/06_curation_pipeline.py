"""The execution-centric curation pipeline on the bundled mini-corpus.

Twenty snippets flow through wrap -> validate -> remediate -> sanitize ->
dedup.  Two carry an undeclared-layer fault the builtin repair rules fix
from the compiler log; one is a near-duplicate, one references an external
file, one exceeds the token budget.  Add a judge backend (see demo 07 for
the wire protocol) and the quality gate runs too.
"""

import json
from pathlib import Path

from tikzrig.backends import BackendHub
from tikzrig.config import default_config
from tikzrig.dataengine import load_corpus, run_pipeline
from tikzrig.sandbox import Sandbox

corpus_dir = Path(__file__).resolve().parent.parent / "tests" / "data" / "minicorpus"

config = default_config()
records = load_corpus(corpus_dir)
print(f"loaded {len(records)} raw snippets from {corpus_dir.name}/")

with Sandbox(config.sandbox) as sandbox, BackendHub() as hub:
    print(f"engine: {sandbox.engine_id}\n")
    records, manifest = run_pipeline(records, config, sandbox, hub)

print("stage ledger:")
for stage, counts in manifest["stages"].items():
    print(f"  {stage:<10} in {counts['in']:>3}  passed {counts['passed']:>3}  rejected {counts['rejected']:>3}")

print("\nrejections:", json.dumps(manifest["reject_reasons"]))

repaired = [r for r in records if any(e.get("event") == "repair-attempt" for e in r.audit)]
print(f"\nremediated records: {[r.id for r in repaired]}")
for rec in repaired:
    print(f"  {rec.id}: repaired in {len(rec.audit)} round(s)")

survivors = [r.id for r in records if r.status != "rejected"]
print(f"\nsurvivors ({len(survivors)}):", " ".join(survivors))
print(f"\nmanifest config hash: {manifest['config_hash']} (reruns are byte-identical)")
