#!/usr/bin/env python3
"""Rebuild the raw MovieLens 100k files from the copy bundled in the RecBole wheel.

The sandbox has no route to files.grouplens.org, but PyPI is reachable and the
``recbole`` wheel ships ml-100k as tab-separated "atomic" files. Ratings and
users come through unchanged; item rows are converted back to the ``u.item``
layout (title + " (year)", 19 genre flags). Release dates are reduced to
``01-Jan-<year>`` and URLs are left empty, since RecBole drops them.

The official folds are regenerated with the same rules as the dataset's
``mku.sh``: u1..u5 take consecutive 20000-line blocks of ``u.data`` as test,
ua/ub hold out ratings 1-10 / 11-20 of each user in file order.

Usage:
    python scripts/rebuild_ml100k.py [--wheel PATH] [--out data/ml-100k]
"""

import argparse
import collections
import glob
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]
PREFIX = "recbole/dataset_example/ml-100k/ml-100k."


def _fetch_wheel() -> Path:
    tmp = Path(tempfile.mkdtemp())
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
         "recbole==1.2.1", "-d", str(tmp)],
        check=True,
    )
    return Path(glob.glob(str(tmp / "recbole-*.whl"))[0])


def _rows(zf: zipfile.ZipFile, name: str) -> list[list[str]]:
    text = zf.read(PREFIX + name).decode("utf-8")
    return [line.split("\t") for line in text.splitlines()[1:] if line]


def _sort_key(line: str):
    u, i = line.split("\t")[:2]
    return int(u), int(i)


def _write(path: Path, lines, sort=False):
    lines = sorted(lines, key=_sort_key) if sort else list(lines)
    path.write_bytes("".join(l + "\n" for l in lines).encode("latin-1"))


def rebuild(wheel: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    zf = zipfile.ZipFile(wheel)

    data = ["\t".join(r[:4]) for r in _rows(zf, "inter")]
    _write(out / "u.data", data)

    users = _rows(zf, "user")
    _write(out / "u.user", ["|".join(r) for r in users])
    occupations = sorted({r[3] for r in users})
    _write(out / "u.occupation", occupations)
    _write(out / "u.genre", [f"{g}|{i}" for i, g in enumerate(GENRES)] + [""])

    items = []
    for item_id, title, year, classes in _rows(zf, "item"):
        tags = set(classes.split(" "))
        flags = ["1" if g in tags else "0" for g in GENRES]
        if year.isdigit():
            full_title, date = f"{title} ({year})", f"01-Jan-{year}"
        else:
            full_title, date = "unknown", ""
        items.append("|".join([item_id, full_title, date, "", ""] + flags))
    _write(out / "u.item", items)

    for k in range(1, 6):
        lo, hi = (k - 1) * 20000, k * 20000
        _write(out / f"u{k}.test", data[lo:hi], sort=True)
        _write(out / f"u{k}.base", data[:lo] + data[hi:], sort=True)

    for name, start, stop in (("ua", 1, 10), ("ub", 11, 20)):
        seen = collections.Counter()
        base, test = [], []
        for line in data:
            user = line.split("\t")[0]
            seen[user] += 1
            (test if start <= seen[user] <= stop else base).append(line)
        _write(out / f"{name}.base", base, sort=True)
        _write(out / f"{name}.test", test, sort=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheel", type=Path, default=None)
    parser.add_argument("--out", type=Path, default=Path("data/ml-100k"))
    args = parser.parse_args()
    rebuild(args.wheel or _fetch_wheel(), args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
