"""The dual self-consistency rollout loop against the toy policy.

Per reference image the policy samples a group of candidate programs;
each is rendered and scored (execution + gated visual reward).  Rollouts
that clear the fidelity gate are back-translated: the policy reconstructs
code from the rendered image, and code consistency between primal and
reconstruction joins the reward.  Advantages normalize within the group.
"""

from tikzrig.backends import BackendHub
from tikzrig.config import default_config
from tikzrig.dscloop import (
    DscSimulator,
    StubRenderer,
    template_family,
    format_report,
    loop_report,
    toy_policy,
)

config = default_config()
config.grpo.group_size = 4

renderer = StubRenderer(dpi=120)   # in-process simulator; swap in
hub = BackendHub()                 # SandboxRenderer for a real toolchain

policy = toy_policy(seed=2024, renderer=renderer, fault_rate=0.1)
simulator = DscSimulator.from_config(config, renderer, hub)

# reference images come from rendering the template family itself
images = []
for idx, code in enumerate(template_family()[:4]):
    _, image = renderer(code)
    images.append((f"ref{idx}", image))

traces = simulator.run_iteration(images, policy)

for trace in traces:
    print(f"\n{trace.image_id}:")
    for i, (status, b) in enumerate(zip(trace.statuses, trace.breakdowns)):
        gate = "gate open" if b.gate_open else "gate closed"
        s_code = f" s_code={b.s_code:.2f}" if b.s_code is not None else ""
        print(
            f"  rollout {i}: {status:<13} r_vis={b.r_vis:.2f} {gate}{s_code}"
            f"  total={b.total:+.3f}  A={trace.stats.advantages[i]:+.2f}"
        )

print("\n" + format_report(loop_report(traces)))
