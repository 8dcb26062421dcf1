"""Rebuild the per-variant and grouped result tables from the per-run rows,
and the subset statistics from the per-case frame counts.
"""
from flowseg import reference
from flowseg.dataset import CaseSplit, manifest_from_counts, split_stats
from flowseg.metrics import STANDARD_GROUPS, average_runs, group_means
from flowseg.report import render_report

runs = reference.run_records()
averaged = {name: average_runs(recs, name) for name, recs in runs.items()}
groups = [group_means(averaged, g) for g in STANDARD_GROUPS]
print(render_report(list(averaged.values()), groups))

manifest = manifest_from_counts(reference.case_counts())
for name, s in split_stats(manifest, CaseSplit.from_mapping(reference.reference_split())).items():
    print(f"{name:<10} {s['total_frames']:>5} frames ({s['dataset_pct']:.2f}%), "
          f"Grasper {s['grasper_frames']} ({s['grasper_pct']:.0f}%), L-hook {s['lhook_frames']} ({s['lhook_pct']:.0f}%)")
