"""On-disk layout of a prepared dataset directory.

``prepare`` (and the synthetic generator) write one directory per
dataset; training, evaluation, and labeling sessions read it back
through this module so the layout is defined in exactly one place:

    left.csv / right.csv     the two entity tables
    candidates.csv           post-blocking pair list (labeled if gold known)
    train.csv / dev.csv / test.csv   3:1:1 split of the candidates
    split.json               split manifest (seed, sizes, cuts)
    stats.json               candidate-set statistics
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .data import (CandidateSet, ConfigError, EntityTable, RecordPair, Splits,
                   candidate_set_from_tables, load_candidates, load_table,
                   stats, write_candidates, write_table)

FILES = ("left.csv", "right.csv", "candidates.csv",
         "train.csv", "dev.csv", "test.csv", "split.json", "stats.json")


@dataclass
class PreparedDataset:
    left: EntityTable
    right: EntityTable
    candidates: CandidateSet
    train: list[RecordPair]
    dev: list[RecordPair]
    test: list[RecordPair]
    manifest: dict
    stats: dict

    @property
    def schema(self) -> list[str]:
        return self.candidates.schema

    @property
    def labeled(self) -> bool:
        return self.candidates.labeled


def write_prepared(out_dir, left: EntityTable, right: EntityTable,
                   candidates: CandidateSet, splits: Splits) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_table(left, os.path.join(out_dir, "left.csv"))
    write_table(right, os.path.join(out_dir, "right.csv"))
    write_candidates(candidates, os.path.join(out_dir, "candidates.csv"))
    for name, pairs in (("train", splits.train), ("dev", splits.dev),
                        ("test", splits.test)):
        part = CandidateSet(candidates.schema, pairs)
        write_candidates(part, os.path.join(out_dir, f"{name}.csv"))
    with open(os.path.join(out_dir, "split.json"), "w", encoding="utf-8") as fh:
        json.dump(splits.manifest, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats(candidates).as_dict(), fh, indent=2)
        fh.write("\n")


def load_prepared(path) -> PreparedDataset:
    if not os.path.isdir(path):
        raise ConfigError(f"{path} is not a prepared dataset directory")
    missing = [f for f in FILES if not os.path.exists(os.path.join(path, f))]
    if missing:
        raise ConfigError(f"{path} is missing prepared files: {missing}")
    left = load_table(os.path.join(path, "left.csv"))
    right = load_table(os.path.join(path, "right.csv"))

    def read_split(name: str) -> list[RecordPair]:
        # file order is the split order; do not re-sort
        ids, labels = load_candidates(os.path.join(path, f"{name}.csv"))
        pairs = []
        for i, (lid, rid) in enumerate(ids):
            if lid not in left.rows or rid not in right.rows:
                raise ConfigError(f"{name}.csv references unknown ids "
                                  f"({lid!r}, {rid!r})")
            pairs.append(RecordPair(lid, rid, left.rows[lid], right.rows[rid],
                                    None if labels is None else labels[i]))
        return pairs

    ids, labels = load_candidates(os.path.join(path, "candidates.csv"))
    candidates = candidate_set_from_tables(left, right, ids, labels=labels)
    with open(os.path.join(path, "split.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(os.path.join(path, "stats.json"), encoding="utf-8") as fh:
        stat = json.load(fh)
    return PreparedDataset(left, right, candidates,
                           read_split("train"), read_split("dev"),
                           read_split("test"), manifest, stat)
