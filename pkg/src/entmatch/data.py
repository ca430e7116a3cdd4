"""Tables, candidate generation, splits, and the synthetic corpus.

File formats (all CSV with a header row):
  * entity table: first column is the record id, remaining columns are the
    schema attributes; an empty cell is a NULL value.
  * matches file: ``left_id,right_id`` rows; any pair absent from the file
    is a non-match.
  * candidate set: ``left_id,right_id[,label]``.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field

MAX_BLOCK_PAIRS = 5_000_000


class TableFormatError(ValueError):
    """An entity table file violates the CSV contract."""


class BlockingError(ValueError):
    """Candidate generation was misconfigured or exceeded the size cap."""


class ConfigError(ValueError):
    """A run or component configuration is invalid."""


# --------------------------------------------------------------------------
# tables


@dataclass
class EntityTable:
    table_id: str
    schema: list[str]
    rows: dict[str, dict[str, str]]

    def __len__(self):
        return len(self.rows)


def load_table(path, table_id: str | None = None) -> EntityTable:
    """Read an entity table; duplicate ids and ragged rows are errors that
    name the offending CSV row number."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableFormatError(f"{path}: empty file") from None
        if len(header) < 2:
            raise TableFormatError(f"{path}: header needs an id column plus "
                                   "at least one attribute")
        schema = header[1:]
        if len(set(schema)) != len(schema):
            raise TableFormatError(f"{path}: duplicate attribute names in header")
        rows: dict[str, dict[str, str]] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise TableFormatError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            rid = row[0]
            if rid in rows:
                raise TableFormatError(f"{path}: duplicate record id {rid!r} at row {lineno}")
            rows[rid] = dict(zip(schema, row[1:]))
    return EntityTable(table_id or str(path), schema, rows)


def write_table(table: EntityTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *table.schema])
        for rid, rec in table.rows.items():
            writer.writerow([rid, *(rec[a] for a in table.schema)])


def load_matches(path) -> set[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["left_id", "right_id"]:
            raise TableFormatError(f"{path}: expected a 'left_id,right_id' header")
        return {(row[0], row[1]) for row in reader if row}


def write_matches(matches, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["left_id", "right_id"])
        for left, right in matches:
            writer.writerow([left, right])


# --------------------------------------------------------------------------
# pairs and candidate sets


def pair_key(left_id: str, right_id: str) -> str:
    return f"{left_id}||{right_id}"


@dataclass
class RecordPair:
    """One candidate pair with the raw (pre-tokenization) attribute values."""
    left_id: str
    right_id: str
    left: dict[str, str]
    right: dict[str, str]
    label: int | None = None

    @property
    def pair_id(self) -> str:
        return pair_key(self.left_id, self.right_id)


@dataclass
class CandidateSet:
    schema: list[str]
    pairs: list[RecordPair]
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.pairs)

    @property
    def labeled(self) -> bool:
        return bool(self.pairs) and self.pairs[0].label is not None


@dataclass
class DatasetStats:
    pairs: int
    matches: int | None
    attributes: int

    def as_dict(self):
        return {"pairs": self.pairs, "matches": self.matches,
                "attributes": self.attributes}


def stats(candidates: CandidateSet) -> DatasetStats:
    matches = None
    if candidates.labeled:
        matches = sum(1 for p in candidates.pairs if p.label == 1)
    return DatasetStats(len(candidates.pairs), matches, len(candidates.schema))


# --------------------------------------------------------------------------
# string block predicates


def qgram_jaccard(s1: str, s2: str, q: int = 3) -> float:
    """Jaccard overlap of the q-gram sets of two lowercased strings.

    Two empty strings are identical (1.0); empty versus non-empty is 0.0.
    """
    if q < 1:
        raise ValueError(f"q must be positive, got {q}")
    a, b = s1.lower(), s2.lower()
    ga = {a[i:i + q] for i in range(len(a) - q + 1)}
    gb = {b[i:i + q] for i in range(len(b) - q + 1)}
    if not ga and not gb:
        # neither string is long enough to yield a q-gram (both empty
        # included): identical strings count as 1, anything else as 0
        return 1.0 if a == b else 0.0
    if not ga or not gb:
        return 0.0
    inter = len(ga & gb)
    return inter / (len(ga) + len(gb) - inter)


# --------------------------------------------------------------------------
# blocking


_RULE_KINDS = ("attribute-equality", "qgram-jaccard", "token-overlap")


@dataclass(frozen=True)
class BlockingRule:
    """One conjunctive predicate over a shared attribute."""
    kind: str
    attribute: str
    q: int = 3
    threshold: float = 0.5
    min_overlap: int = 1

    def __post_init__(self):
        if self.kind not in _RULE_KINDS:
            raise ConfigError(f"unknown blocking rule kind {self.kind!r}")
        if self.kind == "qgram-jaccard" and not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"qgram threshold must be in (0, 1], got {self.threshold}")
        if self.kind == "token-overlap" and self.min_overlap < 1:
            raise ConfigError(f"min_overlap must be >= 1, got {self.min_overlap}")

    def matches_pair(self, lv: str, rv: str) -> bool:
        if self.kind == "attribute-equality":
            return lv == rv
        if self.kind == "qgram-jaccard":
            return qgram_jaccard(lv, rv, self.q) >= self.threshold
        common = set(lv.lower().split()) & set(rv.lower().split())
        return len(common) >= self.min_overlap

    @classmethod
    def from_dict(cls, d: dict) -> "BlockingRule":
        known = {"kind", "attribute", "q", "threshold", "min_overlap"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown blocking rule keys: {sorted(extra)}")
        if "kind" not in d or "attribute" not in d:
            raise ConfigError("blocking rule needs 'kind' and 'attribute'")
        return cls(**d)


def load_blocking_rules(path) -> list[BlockingRule]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "rules" not in doc:
        raise ConfigError(f"{path}: expected an object with a 'rules' list")
    return [BlockingRule.from_dict(r) for r in doc["rules"]]


def block(left: EntityTable, right: EntityTable, rules: list[BlockingRule], *,
          matches: set[tuple[str, str]] | None = None,
          max_pairs: int = MAX_BLOCK_PAIRS,
          allow_full_cartesian: bool = False) -> CandidateSet:
    """All cross-table pairs satisfying every rule, sorted by id pair.

    With no rules this is the full Cartesian product, which is refused
    above ``max_pairs`` unless explicitly overridden.
    """
    if left.schema != right.schema:
        raise BlockingError("tables have different schemas: "
                            f"{left.schema} vs {right.schema}")
    for rule in rules:
        if rule.attribute not in left.schema:
            raise BlockingError(f"blocking rule references unknown attribute "
                                f"{rule.attribute!r}")
    total = len(left) * len(right)
    if not rules and total > max_pairs and not allow_full_cartesian:
        raise BlockingError(
            f"unblocked Cartesian product of {total} pairs exceeds the cap of "
            f"{max_pairs}; pass an override to proceed")
    kept: list[RecordPair] = []
    for lid in sorted(left.rows):
        lrec = left.rows[lid]
        for rid in sorted(right.rows):
            rrec = right.rows[rid]
            if all(r.matches_pair(lrec[r.attribute], rrec[r.attribute]) for r in rules):
                label = None
                if matches is not None:
                    label = 1 if (lid, rid) in matches else 0
                kept.append(RecordPair(lid, rid, lrec, rrec, label))
                if len(kept) > max_pairs and not allow_full_cartesian:
                    raise BlockingError(f"blocking produced more than {max_pairs} "
                                        "pairs; tighten the rules or override")
    return CandidateSet(list(left.schema), kept,
                        provenance={"rules": [vars(r) for r in rules],
                                    "left": left.table_id, "right": right.table_id})


def candidate_set_from_tables(left: EntityTable, right: EntityTable,
                              id_pairs: list[tuple[str, str]],
                              matches: set[tuple[str, str]] | None = None,
                              labels: list[int] | None = None) -> CandidateSet:
    """Materialize an externally supplied candidate list against two tables."""
    if left.schema != right.schema:
        raise BlockingError("tables have different schemas")
    pairs = []
    for i, (lid, rid) in enumerate(id_pairs):
        if lid not in left.rows:
            raise BlockingError(f"candidate references unknown left id {lid!r}")
        if rid not in right.rows:
            raise BlockingError(f"candidate references unknown right id {rid!r}")
        label = None
        if labels is not None:
            label = labels[i]
        elif matches is not None:
            label = 1 if (lid, rid) in matches else 0
        pairs.append(RecordPair(lid, rid, left.rows[lid], right.rows[rid], label))
    pairs.sort(key=lambda p: (p.left_id, p.right_id))
    return CandidateSet(list(left.schema), pairs, provenance={"source": "external"})


def load_candidates(path) -> tuple[list[tuple[str, str]], list[int] | None]:
    """Read a ``left_id,right_id[,label]`` CSV; labels are all or none."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["left_id", "right_id"]:
            raise TableFormatError(f"{path}: expected a 'left_id,right_id[,label]' header")
        with_labels = len(header) >= 3 and header[2].strip() == "label"
        ids: list[tuple[str, str]] = []
        labels: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            ids.append((row[0], row[1]))
            if with_labels:
                if len(row) < 3 or row[2] not in ("0", "1"):
                    raise TableFormatError(f"{path}: row {lineno} has a bad label")
                labels.append(int(row[2]))
    return ids, (labels if with_labels else None)


def write_candidates(candidates: CandidateSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if candidates.labeled:
            writer.writerow(["left_id", "right_id", "label"])
            for p in candidates.pairs:
                writer.writerow([p.left_id, p.right_id, p.label])
        else:
            writer.writerow(["left_id", "right_id"])
            for p in candidates.pairs:
                writer.writerow([p.left_id, p.right_id])


# --------------------------------------------------------------------------
# splits


@dataclass
class Splits:
    train: list[RecordPair]
    dev: list[RecordPair]
    test: list[RecordPair]
    manifest: dict


def split(candidates: CandidateSet, seed: int) -> Splits:
    """Seeded 3:1:1 shuffle-and-cut; dev and test each take floor(N/5) and
    the remainder lands in train."""
    n = len(candidates.pairs)
    if n < 5:
        raise ConfigError(f"need at least 5 candidate pairs to split, got {n}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    m = n // 5
    cut_train, cut_dev = n - 2 * m, n - m
    pairs = candidates.pairs
    train = [pairs[i] for i in order[:cut_train]]
    dev = [pairs[i] for i in order[cut_train:cut_dev]]
    test = [pairs[i] for i in order[cut_dev:]]
    manifest = {"seed": seed, "pairs": n, "cuts": [cut_train, cut_dev],
                "sizes": {"train": len(train), "dev": len(dev), "test": len(test)}}
    return Splits(train, dev, test, manifest)


# --------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class SynthConfig:
    """Perturbation knobs for the two-table synthetic generator.

    With every rate at zero the right-hand table is an exact copy of the
    left and each aligned pair is a trivial duplicate.
    """
    typo_rate: float = 0.25
    abbrev_rate: float = 0.3
    null_rate: float = 0.03
    year_jitter_rate: float = 0.05
    decoy_rate: float = 0.35
    word_bank_size: int = 110

    def __post_init__(self):
        for name in ("typo_rate", "abbrev_rate", "null_rate",
                     "year_jitter_rate", "decoy_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.word_bank_size < 10:
            raise ConfigError("word bank must hold at least 10 words")


SYNTH_SCHEMA = ["title", "authors", "venue", "year"]

_SYLLABLES = ["ka", "lor", "mi", "tan", "ves", "dro", "pel", "sun", "gra", "tor",
              "bel", "ni", "ran", "ox", "fen", "dul", "sar", "quo", "zin", "hav"]
_SURNAMES = ["marsh", "kovac", "lindt", "okafor", "reyes", "whitman", "dubois",
             "tanaka", "silva", "novak", "berg", "fontaine", "ahmed", "petrov",
             "olsen", "moreau", "kim", "dacosta", "varga", "bloom"]
_FIRST = "abcdefghjklmnprstw"
_VENUES = [("symposium on data integration", "sdi"),
           ("workshop on record linkage", "worl"),
           ("conference on information quality", "ciq"),
           ("journal of data curation", "jdc"),
           ("international forum on databases", "ifdb"),
           ("annual meeting on knowledge graphs", "amkg"),
           ("colloquium on schema matching", "cosm"),
           ("transactions on entity systems", "toes")]


def _make_word(rng: random.Random) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))


def _typo(word: str, rng: random.Random) -> str:
    if len(word) < 2:
        return word
    i = rng.randrange(len(word) - 1)
    op = rng.randrange(4)
    if op == 0:                                   # swap adjacent
        return word[:i] + word[i + 1] + word[i] + word[i + 2:]
    if op == 1:                                   # drop one character
        return word[:i] + word[i + 1:]
    if op == 2:                                   # double one character
        return word[:i + 1] + word[i] + word[i + 1:]
    return word[:i] + rng.choice("aeiou") + word[i + 1:]   # replace


def synth_generate(n: int, config: SynthConfig = SynthConfig(), seed: int = 7,
                   ) -> tuple[EntityTable, EntityTable, list[tuple[str, str]]]:
    """Two aligned bibliographic-style tables plus the gold identity pairs.

    Entity i appears as ``a{i}`` in the left table and, perturbed, as
    ``b{i}`` in the right table.  A ``decoy_rate`` fraction of entities
    reuse most of a neighbour's title so blocking keeps hard non-match
    pairs in the candidate set.
    """
    if n < 10:
        raise ConfigError(f"need at least 10 entities, got {n}")
    rng = random.Random(seed)
    bank = sorted({_make_word(rng) for _ in range(config.word_bank_size)})

    titles: list[list[str]] = []
    for i in range(n):
        if i > 0 and rng.random() < config.decoy_rate:
            base = list(titles[rng.randrange(len(titles))])
            swaps = rng.randint(1, 2)
            for _ in range(min(swaps, len(base))):
                base[rng.randrange(len(base))] = rng.choice(bank)
            titles.append(base)
        else:
            titles.append([rng.choice(bank) for _ in range(rng.randint(3, 6))])

    left_rows: dict[str, dict[str, str]] = {}
    right_rows: dict[str, dict[str, str]] = {}
    matches: list[tuple[str, str]] = []
    for i in range(n):
        authors = [f"{rng.choice(_FIRST)}. {rng.choice(_SURNAMES)}"
                   for _ in range(rng.randint(1, 3))]
        venue_full, venue_abbr = rng.choice(_VENUES)
        year = rng.randint(1971, 2020)
        lid, rid = f"a{i:04d}", f"b{i:04d}"
        left_rows[lid] = {"title": " ".join(titles[i]),
                          "authors": ", ".join(authors),
                          "venue": venue_full,
                          "year": str(year)}

        # perturbed twin for the right table
        p_title = [(_typo(w, rng) if rng.random() < config.typo_rate else w)
                   for w in titles[i]]
        p_authors = []
        for a in authors:
            initial, surname = a.split(". ", 1)
            if rng.random() < config.typo_rate:
                surname = _typo(surname, rng)
            if rng.random() < config.abbrev_rate:
                p_authors.append(f"{initial}. {surname[0]}.")
            else:
                p_authors.append(f"{initial}. {surname}")
        p_venue = venue_abbr if rng.random() < config.abbrev_rate else venue_full
        p_year = year
        if rng.random() < config.year_jitter_rate:
            p_year = year + rng.choice((-1, 1))
        rec = {"title": " ".join(p_title),
               "authors": ", ".join(p_authors),
               "venue": p_venue,
               "year": str(p_year)}
        for attr in SYNTH_SCHEMA:
            if rng.random() < config.null_rate:
                rec[attr] = ""
        right_rows[rid] = rec
        matches.append((lid, rid))

    left = EntityTable("synth-left", list(SYNTH_SCHEMA), left_rows)
    right = EntityTable("synth-right", list(SYNTH_SCHEMA), right_rows)
    return left, right, matches


def default_blocking_rules() -> list[BlockingRule]:
    """The rule set used for the bundled synthetic corpus."""
    return [BlockingRule("qgram-jaccard", "title", q=3, threshold=0.18)]
