"""Convert the UCI heart, australian and german credit files to sparse text.

The raw comma-separated files ship inside the keel-ds wheel
(keel_ds/data/balanced/raw/*.dat). Usage:

    python scripts/convert_datasets.py path/to/keel_ds-*.whl data/

Categorical attributes are one-hot encoded over the values that occur;
numeric attributes are copied as is. Zero values are omitted.
"""

import sys
import zipfile
from pathlib import Path

# 0-based columns that are categorical; the last column is the label.
CATEGORICAL = {
    "heart": set(),
    "australian": {0, 3, 4, 5, 7, 8, 10, 11},
    "german": {0, 2, 3, 5, 6, 8, 9, 11, 13, 14, 16, 18, 19},
}
# raw label -> +1 / -1
POSITIVE = {"heart": "2", "australian": "1", "german": "1"}


def convert(name, text):
    rows = [[v.strip() for v in line.split(",")] for line in text.splitlines() if line.strip()]
    ncol = len(rows[0]) - 1
    cat = CATEGORICAL[name]
    levels = {c: sorted({r[c] for r in rows}) for c in cat}
    layout = []
    for c in range(ncol):
        layout.append((c, levels[c]) if c in cat else (c, None))
    out = []
    for r in rows:
        label = "+1" if r[-1] == POSITIVE[name] else "-1"
        feats = []
        idx = 1
        for c, lv in layout:
            if lv is None:
                v = float(r[c])
                if v != 0.0:
                    feats.append(f"{idx}:{v:g}")
                idx += 1
            else:
                feats.append(f"{idx + lv.index(r[c])}:1")
                idx += len(lv)
        out.append(" ".join([label] + feats))
    return "\n".join(out) + "\n", idx - 1


def main():
    wheel, dest = Path(sys.argv[1]), Path(sys.argv[2])
    dest.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        for name in CATEGORICAL:
            text = z.read(f"keel_ds/data/balanced/raw/{name}.dat").decode()
            body, dim = convert(name, text)
            (dest / f"{name}.txt").write_text(body)
            print(f"{name}: {body.count(chr(10))} instances, {dim} features")


if __name__ == "__main__":
    main()
