#!/usr/bin/env python3
"""
Tracking a synthetic sequence: threshold baseline vs CRF inactivation
=====================================================================

Generates a scenario with injected boundary-drift events, runs the tracker
in both modes on the same hypothesis stream, and evaluates both outputs
against ground truth.
"""
from crftrack import DriftEvent, ScenarioSpec, default_params, evaluate
from crftrack import generate_scenario, run

# Eight pedestrians, a slow vertical camera pan, and four drift events: at
# each event one tracklet slides off its exiting target onto a neighbor and
# then lingers near the boundary.
spec = ScenarioSpec(
    num_frames=130,
    num_targets=8,
    camera_pan=(0.0, 0.8),
    drift_events=[DriftEvent(18, 0, 1), DriftEvent(44, 2, 3),
                  DriftEvent(70, 4, 5), DriftEvent(96, 6, 7)],
    seed=3,
)
hypotheses, ground_truth, ctx = generate_scenario(spec)
print(f"scenario: {len(hypotheses.records)} hypothesis rows, "
      f"{len(ground_truth.records)} ground-truth rows, "
      f"{spec.num_frames} frames at {ctx.frame_rate:g} fps")

params, bp = default_params()

# Threshold-only baseline: a tracklet survives as long as its score is high.
baseline_out = run(hypotheses, params, ctx, mode="threshold-only")

# CRF mode: per-frame joint reasoning over scores and kinematics. Collect the
# per-frame decisions to see when the drifters get caught.
frame_results = []
crf_out = run(hypotheses, params, ctx, mode="crf", inference="loopy-bp", bp=bp,
              results=frame_results)

kills = [(fr.frame, d.track_id) for fr in frame_results for d in fr.decisions
         if d.decision == "inactivated-crf"]
print("\nCRF inactivations (frame, tracklet):", kills)
print("drift events were injected at frames:",
      [ev.frame for ev in spec.drift_events])

base_report = evaluate(ground_truth, baseline_out)
crf_report = evaluate(ground_truth, crf_out)

print("\n                 baseline      CRF")
for field in ("mota", "idf1", "idp", "idr"):
    b, c = getattr(base_report, field), getattr(crf_report, field)
    print(f"  {field.upper():<6}     {b:10.4f} {c:10.4f}")
for field in ("ids", "fp", "fn", "frag"):
    b, c = getattr(base_report, field), getattr(crf_report, field)
    print(f"  {field.upper():<6}     {b:10d} {c:10d}")

print("\nThe baseline keeps every drifted tracklet alive: each one rides its "
      "stolen target,\nparks at the image boundary, and later swallows a newly "
      "entering pedestrian's\ndetection, costing an identity switch. The CRF "
      "inactivates the drifter the moment\nits velocity change disagrees with "
      "the other tracklets.")
