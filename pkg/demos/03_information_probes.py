"""The information-decomposition benchmark in miniature.

Trains the masked-fusion model and the unimodal contrastive baseline on a
reduced grid, then ridge-probes their embeddings for redundant (location),
unique (per-modality noise dim) and synergistic (sum of both noise dims)
content.  At this toy scale the absolute numbers are weak; the full-scale
run behind `smf-lab pretrain` + `smf-lab probe --gate` is where the
orderings are enforced.

Run:  python3 demos/03_information_probes.py
"""

from smflab.pid import (
    first_layer_unique_weight_share,
    generate_synthetic_dataset,
    run_pid_probes,
    train_baseline,
)

dataset = generate_synthetic_dataset(seed=9, grid_n=40)
print(f"dataset: {len(dataset)} locations, probing on the validation split\n")

runs = []
for kind in ("smf_full", "unimodal_contrastive"):
    print(f"training {kind} (40 epochs at demo scale)...")
    runs.append(train_baseline(kind, dataset, seed=9, epochs=40))

report = run_pid_probes(runs, dataset)
print("\nheld-out R^2 per probe:")
print(f"{'model':26s} {'redundancy':>10s} {'uniqueness':>10s} {'synergy':>8s} {'w-share':>8s}")
for kind, entry in report.scores.items():
    print(
        f"{kind:26s} {entry['redundancy']:10.3f} {entry['uniqueness']:10.3f} "
        f"{entry['synergy']:8.3f} {entry['unique_weight_share']:8.3f}"
    )

print(
    "\nreading: the unimodal baseline never sees modality 2, so the synergy"
    "\ntarget (mod1 noise + mod2 noise) is structurally out of its reach,"
    "\nwhile masked fusion with reconstruction keeps both noise dims around."
)
