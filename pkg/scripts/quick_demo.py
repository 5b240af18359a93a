#!/usr/bin/env python3
"""Small end-to-end walkthrough: simulate, train, recognize.

Builds a reduced campaign on the bank domain (10 strategies x 8 sessions),
trains checkpoint-40 and checkpoint-100 models, then runs the recognizer on
a handful of held-out traces and prints the ranked posteriors next to the
true labels.  Finishes in well under a minute.
"""

import argparse
import tempfile
from pathlib import Path

from negrec.dataset import (
    CampaignConfig,
    OppositionBand,
    STANDARD_DOMAINS,
    build_dataset,
    label_vocabulary,
    load_features,
    load_profiles,
    load_split,
    standard_pool,
)
from negrec.experiments import load_model_set, recognize, train_checkpoint_model
from negrec.features import Scenario
from negrec.protocol import read_traces


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None, help="working directory (default: temp)")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    workdir = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="negrec-demo-"))
    config = CampaignConfig(
        scenario=Scenario.P2,
        domains=(STANDARD_DOMAINS["bank"],),
        bands=(OppositionBand(0.1, 0.45),),
        pool=standard_pool(),
        sessions_per_cell=8,
        checkpoints=(40, 100),
        master_seed=args.seed,
    )
    print("building campaign ...")
    campaign = build_dataset(config, workdir / "campaigns")
    split = load_split(campaign)
    models_dir = workdir / "models"
    for checkpoint in config.checkpoints:
        series = load_features(campaign, checkpoint)
        train_series = [s for s in series if s.trace_id in set(split["train"])]
        labels = label_vocabulary([s.label for s in train_series])
        print(f"training checkpoint-{checkpoint} model on {len(train_series)} traces ...")
        train_checkpoint_model(
            train_series, config.scenario, checkpoint, labels,
            seed=args.seed, epochs=40, models_dir=models_dir,
        )

    model_set = load_model_set(models_dir)
    profiles = load_profiles(campaign)
    domain = profiles.domains["bank"]
    profile_m = profiles.detector_profiles["bank"]
    test_ids = set(split["test"])
    shown = 0
    print("\nrecognizing held-out traces:")
    for trace in read_traces(campaign / "traces.jsonl"):
        if trace.trace_id not in test_ids:
            continue
        result = recognize(model_set, trace, domain, profile_m, None, config.deadline)
        top = ", ".join(f"{label} {prob:.2f}" for label, prob in result.posterior[:3])
        mark = "ok " if result.top == trace.opponent_label else "    "
        print(f"  {mark}true={trace.opponent_label:22s} cp={result.checkpoint:3d}  {top}")
        shown += 1
        if shown >= 10:
            break
    print(f"\nartifacts under {workdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
