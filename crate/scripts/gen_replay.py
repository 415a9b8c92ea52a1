"""Writes the replay scenario from the ramp schedule below.

usage: gen_replay.py OUT.toml [JSON overrides]
"""
import math, sys

# linear ramps (start, end) and arrival chunks, in minutes; tuned against simulated totals
RAMP = dict(V100=(0, 7.8), P100=(0, 0.6), P40=(0, 19.0), M60=(0, 30.0))
POINTS = dict(  # model -> [(time, fraction)]
    K80=[(28.2, 1.0)],              # non-stalled share; stalled share released at 50
    T4=[(9.9, 0.54), (74.4, 0.46)],
    K520=[(14.1, 0.15), (70.0, 0.85)],
    P4=[(66.9, 1.0)],
)
SPREAD = 4.0  # point chunks are smeared over +-SPREAD minutes
if len(sys.argv) > 2:
    import json
    o = json.loads(sys.argv[2])
    RAMP.update({k: tuple(v) for k, v in o.get("RAMP", {}).items()})
    POINTS.update({k: [tuple(x) for x in v] for k, v in o.get("POINTS", {}).items()})

A = [("a-us-east-1","us-east"),("a-us-east-2","us-east"),("a-us-west-1","us-west"),("a-us-west-2","us-west"),
     ("a-ca-central-1","canada"),("a-eu-west-1","europe"),("a-eu-central-1","europe"),("a-eu-north-1","europe"),
     ("a-ap-northeast-1","asia-pacific"),("a-ap-southeast-2","asia-pacific")]
B = [("b-eastus","us-east"),("b-eastus2","us-east"),("b-westus2","us-west"),("b-southcentralus","us-central"),
     ("b-northcentralus","us-central"),("b-westeurope","europe"),("b-northeurope","europe"),
     ("b-uksouth","europe"),("b-southeastasia","asia-pacific")]
C = [("c-us-central1","us-central"),("c-us-east1","us-east"),("c-us-east4","us-east"),("c-us-west1","us-west"),
     ("c-us-west2","us-west"),("c-europe-west1","europe"),("c-europe-west4","europe"),
     ("c-asia-east1","asia-pacific"),("c-asia-northeast1","asia-pacific")]

# model -> (total, [region indices]) per provider; last region of each provider is the stalled one
ALLOC = {
    "A": dict(V100=(4000,[0,1,2,3]), M60=(6100,[2,3,4,5,6,7]), K80=(5000,[4,5,6,7,8]),
              K520=(5400,[0,1,5,6,8]), T4=(1600,[3,7])),
    "B": dict(V100=(3000,[0,1,2]), P100=(3600,[3,4,5]), P40=(2100,[0,6]), K80=(2900,[6,7]),
              M60=(4000,[1,2,4,7]), T4=(1000,[3,5])),
    "C": dict(V100=(2200,[0,1]), P100=(3500,[2,3,4]), T4=(2000,[5,6]), P4=(500,[7]), K80=(2000,[0,5,7])),
}
STALLED = {"A": (9, 1000), "B": (8, 800), "C": (8, 800)}  # K80 requested at t=0, frozen until recovery
RESPAWN = ["b-eastus2", "b-westus2"]
WAN = dict(zip(["us-east","us-west","us-central","canada","europe","asia-pacific"], [20,70,40,30,90,150]))

def split(total, n):
    base = [total // n] * n
    for i in range(total - sum(base)):
        base[i] += 1
    return base

def steps(model, share):
    """Cumulative (time, target) steps for one region's share of a model."""
    out = []
    if model in RAMP:
        (t0, t1), n = RAMP[model], 6
        for i in range(n):
            out.append((round(t0 + (t1 - t0) * (i + 0.5) / n, 2), share * (i + 1) / n))
    else:
        acc = 0.0
        for t, f in POINTS[model]:
            for k in range(4):
                acc += f / 4
                out.append((round(t - SPREAD + SPREAD * (2 * k + 1) / 4, 2), share * acc))
    res, prev = [], 0
    for t, x in out:
        v = round(x)
        if v != prev:
            res.append((t, v))
            prev = v
    if res and res[-1][1] != share:
        res[-1] = (res[-1][0], share)
    return res

regions = {"A": A, "B": B, "C": C}
lines = ['# Calibrated replay of a ~3 h, 28-region multi-cloud GPU burst.',
         '# Generated by scripts/gen_replay.py; edit the generator, not this file.',
         'name = "paper-replay"', 'seed = 1', 'horizon_min = 240', '']
plan = []
quota = {}
for p, regs in regions.items():
    for model, (total, idx) in ALLOC[p].items():
        for r, share in zip(idx, split(total, len(idx))):
            name = regs[r][0]
            quota.setdefault(name, {})[model] = share
            for t, v in steps(model, share):
                plan.append((t, name, model, v))
    r, n = STALLED[p]
    name = regs[r][0]
    quota.setdefault(name, {})["K80"] = n
    plan.append((0.0, name, "K80", n))

for p, regs in regions.items():
    for i, (name, geo) in enumerate(regs):
        q = quota[name]
        lines += ['[[regions]]', f'name = "{name}"', f'provider = "{p}"', f'geo = "{geo}"',
                  f'wan_latency_ms = {WAN[geo]}',
                  'quota = { ' + ', '.join(f'{m} = {v}' for m, v in q.items()) + ' }']
        if p == "B":
            lines += [f'scale_sets = {max(math.ceil(v / 1000) for v in q.values()) + 1}', 'scale_set_max = 1000']
        lines.append('')

plan.sort(key=lambda x: (x[0], x[1], x[2]))
for t, name, model, v in plan:
    lines += ['[[plan]]', f'at_min = {t}', f'region = "{name}"', f'gpu = "{model}"', f'target = {v}', '']

lines += ['[workload]', 'size_factor = 0.125', 'jitter = 0.05', 'input_gb = 10', 'output_gb = 1',
          'cpu_jobs = 230000', '',
          '[[workload.jobs]]', 'input = "Standard"', 'count = 140000',
          'gpus = ["V100", "P100", "P40", "T4", "P4", "M60"]', 'replicas = ["*"]', '',
          '[[workload.jobs]]', 'input = "Small"', 'count = 100000', 'gpus = ["K80", "K520"]',
          'replicas = ["*"]', '',
          '[shutdown]', 'at_min = 115', '',
          '[[faults]]', 'kind = "preemption"', 'rate_per_hour = 0.02', '']
stalled = [regions[p][STALLED[p][0]][0] for p in "ABC"]
lines += ['[[faults]]', 'kind = "stall"', 'fraction = 1.0',
          'regions = [' + ', '.join(f'"{s}"' for s in stalled) + ']', 'start_min = 0', 'end_min = 50', '',
          '[[faults]]', 'kind = "respawn"', 'rogue_per_call = 1',
          'regions = [' + ', '.join(f'"{s}"' for s in RESPAWN) + ']', 'start_min = 115', '']
for s in stalled:
    lines += ['[[operator]]', 'at_min = 50', 'action = "manual_recovery"', f'region = "{s}"', '']
for s in RESPAWN:
    lines += ['[[operator]]', 'at_min = 230', 'action = "manual_sweep"', f'region = "{s}"', '']

open(sys.argv[1], "w").write("\n".join(lines))
tot = {}
for name, q in quota.items():
    for m, v in q.items():
        tot[m] = tot.get(m, 0) + v
print(tot, sum(tot.values()), len(plan), "plan entries", file=sys.stderr)
