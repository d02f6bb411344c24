#!/usr/bin/env python3
"""End-to-end demo: packages the three shipped templates, publishes them to a
scratch platform, trains all three on a generated corpus, approves, serves,
and prints a few inferences.  Everything runs in-process on a temp dir.

    python scripts/demo_lifecycle.py [--seed 17] [--rows 500]
"""

from __future__ import annotations

import argparse
import tempfile
import time
from pathlib import Path

from modelforge import demo, template
from modelforge.clock import VirtualClock
from modelforge.platform import Platform, PlatformConfig


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=17)
    parser.add_argument("--rows", type=int, default=500)
    parser.add_argument("--keep", action="store_true",
                        help="print the data dir instead of deleting it")
    args = parser.parse_args()

    work = Path(tempfile.mkdtemp(prefix="modelforge-demo-"))
    corpus = demo.generate_corpus(args.seed, args.rows, 40)
    corpus_csv = demo.write_corpus_csv(work / "work_orders.csv", corpus)
    print(f"corpus: {args.rows} work orders, 40 failure codes -> {corpus_csv}")

    platform = Platform(PlatformConfig(data_dir=str(work / "data")),
                        clock=VirtualClock(demo.ANCHOR_EPOCH))
    t0 = time.monotonic()
    try:
        for name, project in demo.write_all_templates(work / "templates").items():
            ref = platform.publish_template(template.package(project))
            print(f"published {ref.coordinate} ({ref.digest[:12]})")

        model_ids = {}
        for name in ("fcr", "similarity", "approval"):
            inst = platform.instantiate_model(
                name, None, demo.demo_config(name, corpus_csv))
            platform.train_model(inst.model_id)
            model_ids[name] = inst.model_id
        assert platform.run_until_idle(timeout=300)

        for name, model_id in model_ids.items():
            platform.approve_model(model_id)
            info = platform.model_info(model_id)
            metrics = info["versions"][0]["metrics"]
            score = metrics.get("val_accuracy", metrics.get("val_score"))
            print(f"{name}: {info['state']} v{info['serving_version']} "
                  f"holdout={score:.3f}")

        print("\nsample inferences:")
        out = platform.infer(model_ids["fcr"],
                             {"description": "comp7 sign7 urgent"})
        print(f"  fcr({'comp7 sign7 urgent'!r}) -> {out['output']['label']}")
        out = platform.infer(model_ids["approval"],
                             {"cost": 450, "priority": "low", "site": "SITE-A"})
        print(f"  approval(cost=450, low) -> {out['output']['decision']} "
              f"(score {out['output']['score']:.3f})")
        out = platform.infer(model_ids["similarity"],
                             {"description": corpus[0].description})
        hits = [(r["id"], round(r["score"], 3)) for r in out["output"]["results"]]
        print(f"  similarity({corpus[0].description!r}) -> {hits}")

        print(f"\nlifecycle wall time: {time.monotonic() - t0:.1f}s")
        print(f"journal: {platform.journal.events_path}")
    finally:
        platform.close()
    if args.keep:
        print(f"data kept at {work}")


if __name__ == "__main__":
    main()
