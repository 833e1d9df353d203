#!/usr/bin/env python3
"""Re-split a pooled triple set into train/valid/test files of fixed sizes.

Every entity and relation is guaranteed to appear in the training split.
The split is a pure function of the pooled facts and the seed.

Usage:
  make_splits.py --out data/umls --sizes 1959 1306 3264 --seed 7 SRC_FILE...
"""
import argparse
import pathlib
import random


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--sizes", type=int, nargs=3, required=True)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("sources", nargs="+")
    args = ap.parse_args()

    facts = []
    seen = set()
    for src in args.sources:
        for line in pathlib.Path(src).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            fact = tuple(line.split("\t"))
            if len(fact) != 3:
                raise SystemExit(f"{src}: malformed line {line!r}")
            if fact not in seen:
                seen.add(fact)
                facts.append(fact)
    facts.sort()
    n_train, n_valid, n_test = args.sizes
    if n_train + n_valid + n_test != len(facts):
        raise SystemExit(f"sizes sum to {n_train + n_valid + n_test}, pool has {len(facts)}")

    rng = random.Random(args.seed)
    rng.shuffle(facts)

    covered_ent, covered_rel = set(), set()
    train, rest = [], []
    for h, r, t in facts:
        if h not in covered_ent or t not in covered_ent or r not in covered_rel:
            train.append((h, r, t))
            covered_ent |= {h, t}
            covered_rel.add(r)
        else:
            rest.append((h, r, t))
    if len(train) > n_train:
        raise SystemExit("coverage set larger than requested train size")
    fill = n_train - len(train)
    train += rest[:fill]
    rest = rest[fill:]
    rng.shuffle(train)
    splits = {"train": train, "valid": rest[:n_valid], "test": rest[n_valid:]}

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in splits.items():
        with open(out / f"{name}.txt", "w", encoding="utf-8") as f:
            for row in rows:
                f.write("\t".join(row) + "\n")
        print(f"{name}: {len(rows)}")


if __name__ == "__main__":
    main()
