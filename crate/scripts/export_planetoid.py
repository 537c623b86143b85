#!/usr/bin/env python3
"""Writes Cora, CiteSeer and PubMed in the loader's text layout.

    <root>/<name>/<name>.content   id f_1 .. f_F label
    <root>/<name>/<name>.cites     id id
    <root>/<name>/split/{train,val,test}.txt

Needs torch_geometric. Features are written raw; the loader normalises rows.
"""

import argparse
from pathlib import Path

from torch_geometric.datasets import Planetoid

NAMES = {"cora": "Cora", "citeseer": "CiteSeer", "pubmed": "PubMed"}


def fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def export(name: str, root: Path, cache: Path) -> None:
    data = Planetoid(str(cache), NAMES[name], split="public")[0]
    out = root / name
    (out / "split").mkdir(parents=True, exist_ok=True)
    x, y = data.x.tolist(), data.y.tolist()
    with open(out / f"{name}.content", "w") as f:
        for i, (row, label) in enumerate(zip(x, y)):
            f.write(f"n{i} {' '.join(fmt(v) for v in row)} c{label}\n")
    src, dst = data.edge_index.tolist()
    # Each undirected link once; the loader symmetrises.
    links = sorted({(min(s, t), max(s, t)) for s, t in zip(src, dst) if s != t})
    with open(out / f"{name}.cites", "w") as f:
        f.writelines(f"n{s} n{t}\n" for s, t in links)
    for part in ("train", "val", "test"):
        mask = getattr(data, f"{part}_mask").tolist()
        with open(out / "split" / f"{part}.txt", "w") as f:
            f.writelines(f"n{i}\n" for i, m in enumerate(mask) if m)
    print(f"{name}: {len(x)} nodes, {len(links)} links -> {out}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--root", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    ap.add_argument("--cache", type=Path, default=Path("/tmp/planetoid"))
    ap.add_argument("names", nargs="*", default=list(NAMES), choices=list(NAMES))
    args = ap.parse_args()
    for name in args.names:
        export(name, args.root, args.cache)


if __name__ == "__main__":
    main()
