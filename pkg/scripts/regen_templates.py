#!/usr/bin/env python3
"""Regenerate the templates/ source projects from the scaffolder.

Run after editing modelforge.demo so the committed trees stay in sync
(tests assert digest equality between the two).
"""

from pathlib import Path

from modelforge.demo import write_all_templates

if __name__ == "__main__":
    root = Path(__file__).resolve().parents[1] / "templates"
    for name, path in write_all_templates(root).items():
        print(f"{name}: {path}")
