"""Regenerate the sample input files under data/."""

import json
from pathlib import Path

from mfroute.scenarios import STRONG_INTERACTION, WEAK_INTERACTION, default_grid, line3_spec, save_grid, save_spec

DATA = Path(__file__).resolve().parent.parent / "data"


def main():
    DATA.mkdir(exist_ok=True)
    save_spec(line3_spec(), DATA / "line3.json")
    save_grid(default_grid(), 50, STRONG_INTERACTION, DATA / "grid_strong.json")
    save_grid(default_grid(), 50, WEAK_INTERACTION, DATA / "grid_weak.json")
    doc = [
        {"name": "strong", "A": STRONG_INTERACTION.tolist()},
        {"name": "weak", "A": WEAK_INTERACTION.tolist()},
    ]
    (DATA / "interactions.json").write_text(json.dumps(doc, indent=1))


if __name__ == "__main__":
    main()
