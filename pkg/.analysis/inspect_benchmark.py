"""Scratch analysis: evaluate the acceptance gates from cached benchmark runs.

Not part of the deliverable; reads what the heavy acceptance fixture cached.
"""

import json
import statistics
import sys
from pathlib import Path

sys.path.insert(0, "src")
from smflab.pid import BASELINE_KINDS, PidReport

CACHE = Path("/root/pkg/.acceptance_cache")
SEEDS = (11, 12, 13)

reports = {}
convergence = {}
for seed in SEEDS:
    rp = CACHE / f"acceptance_seed{seed}_report.csv"
    cv = CACHE / f"acceptance_seed{seed}_convergence.json"
    if not rp.exists():
        print(f"seed {seed}: not ready")
        continue
    reports[seed] = PidReport.from_csv(rp)
    convergence[seed] = json.loads(cv.read_text()) if cv.exists() else {}

for seed, report in reports.items():
    print(f"--- seed {seed}")
    for kind in BASELINE_KINDS:
        e = report.scores.get(kind)
        if e is None:
            continue
        conv = convergence.get(seed, {}).get(kind)
        ratio = f" loss e1={conv[0]:.3f} e250={conv[1]:.3f}" if conv else ""
        print(
            f"  {kind:26s} red={e['redundancy']:.3f} uniq={e['uniqueness']:.3f} "
            f"syn={e['synergy']:.3f} wshare={e['unique_weight_share']:.3f}{ratio}"
        )

if len(reports) == len(SEEDS):
    def med(expr):
        return statistics.median(expr(reports[s].scores) for s in SEEDS)

    gates = [
        ("5a smf_full redundancy >= 0.8", med(lambda s: s["smf_full"]["redundancy"]), 0.8, ">="),
        ("5b uniq margin >= 0.3", med(lambda s: s["smf_full"]["uniqueness"] - s["pairwise_contrastive"]["uniqueness"]), 0.3, ">="),
        ("5b syn margin >= 0.3", med(lambda s: s["smf_full"]["synergy"] - s["pairwise_contrastive"]["synergy"]), 0.3, ">="),
        ("5c unimodal synergy <= 0.3", med(lambda s: s["unimodal_contrastive"]["synergy"]), 0.3, "<="),
        ("5d smf_full synergy >= 0.6", med(lambda s: s["smf_full"]["synergy"]), 0.6, ">="),
        ("6 wshare margin > 0", med(lambda s: s["smf_full"]["unique_weight_share"] - s["pairwise_contrastive"]["unique_weight_share"]), 0.0, ">"),
        ("7 CL>=Rec redundancy", med(lambda s: s["smf_contrastive_only"]["redundancy"] - s["smf_reconstruction_only"]["redundancy"]), 0.0, ">="),
        ("7 Rec>CL uniqueness", med(lambda s: s["smf_reconstruction_only"]["uniqueness"] - s["smf_contrastive_only"]["uniqueness"]), 0.0, ">"),
    ]
    print("--- gates (medians)")
    for name, value, threshold, op in gates:
        ok = {"<=": value <= threshold, ">=": value >= threshold, ">": value > threshold}[op]
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}: {value:+.3f}")
