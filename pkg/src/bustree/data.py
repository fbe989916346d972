"""Domain data model: attribute schema, user/engagement tables, activity split.

All tables are immutable after construction and index-coded: categorical
values and item ids are dictionary-encoded with lexicographically sorted
vocabularies, so integer code order agrees with string order everywhere
downstream (tie-breaks, child ordering, ranked lists).
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

NULL = "NULL"
TRAINING = "training"
HOLDOUT = "holdout"
WINDOWS = (TRAINING, HOLDOUT)


class BusError(Exception):
    """Base class for errors raised by this package."""


class DataError(BusError):
    """Malformed input data or a violated table invariant."""


@dataclass(frozen=True)
class AttributeType:
    """A categorical attribute: name, value domain, and the attribute names
    that must sit at a shallower tree level before this one is eligible."""

    name: str
    values: frozenset = frozenset()
    prerequisites: frozenset = frozenset()

    def __post_init__(self):
        # the missing-value sentinel belongs to every domain
        object.__setattr__(self, "values", frozenset(self.values) | {NULL})
        object.__setattr__(self, "prerequisites", frozenset(self.prerequisites))


class AttributeSchema:
    """Ordered catalog of attribute types with an acyclic prerequisite relation."""

    def __init__(self, types: Sequence[AttributeType]):
        self.types = list(types)
        self.names = [t.name for t in self.types]
        if len(set(self.names)) != len(self.names):
            dupes = sorted({n for n in self.names if self.names.count(n) > 1})
            raise DataError(f"attribute type names are not unique: {dupes}")
        self._index = {t.name: i for i, t in enumerate(self.types)}
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}  # 1 = visiting, 2 = done

        def visit(name: str, trail: list[str]) -> None:
            if state.get(name) == 2:
                return
            if state.get(name) == 1:
                cycle = " -> ".join(trail[trail.index(name):] + [name])
                raise DataError(f"attribute prerequisites contain a cycle: {cycle}")
            state[name] = 1
            for dep in sorted(self[name].prerequisites):
                if dep in self._index:
                    visit(dep, trail + [name])
            state[name] = 2

        for name in self.names:
            visit(name, [])

    def __getitem__(self, name: str) -> AttributeType:
        try:
            return self.types[self._index[name]]
        except KeyError:
            raise DataError(f"unknown attribute type {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __iter__(self) -> Iterator[AttributeType]:
        return iter(self.types)

    def __len__(self) -> int:
        return len(self.types)

    def index_of(self, name: str) -> int:
        if name not in self._index:
            raise DataError(f"unknown attribute type {name!r}")
        return self._index[name]


def load_schema(path) -> AttributeSchema:
    """Read an attribute schema from JSON: {"attributes": [{"name", "values",
    "prerequisites"}, ...]}."""
    import json
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("attributes"), list):
        raise DataError(f"{path}: expected an object with an 'attributes' list")
    types = []
    for i, entry in enumerate(raw["attributes"]):
        if not isinstance(entry, dict) or "name" not in entry:
            raise DataError(f"{path}: attributes[{i}] needs at least a 'name'")
        types.append(AttributeType(
            entry["name"],
            frozenset(entry.get("values", ())),
            frozenset(entry.get("prerequisites", ())),
        ))
    return AttributeSchema(types)


def save_schema(schema: AttributeSchema, path) -> None:
    import json
    payload = {"attributes": [
        {"name": t.name, "values": sorted(t.values),
         "prerequisites": sorted(t.prerequisites)}
        for t in schema
    ]}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    attributes: dict


class UserTable:
    """Immutable user universe with one categorical value per schema attribute.

    `codes` is an int32 matrix [n_users, n_types]; `vocabularies[t]` is the
    sorted value list of type t, so codes compare like the strings they encode.
    """

    def __init__(self, schema: AttributeSchema, user_ids: Sequence[str],
                 codes: np.ndarray, vocabularies: Sequence[Sequence[str]]):
        self.schema = schema
        self.user_ids = list(user_ids)
        self.codes = codes
        self.vocabularies = [list(v) for v in vocabularies]
        self._id_index = {u: i for i, u in enumerate(self.user_ids)}
        if len(self._id_index) != len(self.user_ids):
            raise DataError("duplicate user_id in user table")
        if codes.shape != (len(self.user_ids), len(schema)):
            raise DataError("user code matrix does not match schema/universe shape")
        for name, vocab in zip(schema.names, self.vocabularies):
            if any(vocab[j] >= vocab[j + 1] for j in range(len(vocab) - 1)):
                raise DataError(f"vocabulary for {name!r} is not sorted and unique")

    @classmethod
    def from_records(cls, schema: AttributeSchema,
                     records: Iterable[tuple[str, Mapping[str, str]]]) -> "UserTable":
        user_ids: list[str] = []
        raw_cols: list[list[str]] = [[] for _ in schema.names]
        for user_id, attrs in records:
            user_ids.append(user_id)
            for j, name in enumerate(schema.names):
                value = attrs.get(name, NULL)
                raw_cols[j].append(value if value else NULL)
        vocabularies = [sorted(set(col) | {NULL}) for col in raw_cols]
        codes = np.empty((len(user_ids), len(schema)), dtype=np.int32)
        for j, (col, vocab) in enumerate(zip(raw_cols, vocabularies)):
            lookup = {v: c for c, v in enumerate(vocab)}
            codes[:, j] = [lookup[v] for v in col] if col else []
        return cls(schema, user_ids, codes, vocabularies)

    @classmethod
    def from_codes(cls, schema: AttributeSchema, user_ids: Sequence[str],
                   codes: np.ndarray, vocabularies: Sequence[Sequence[str]]) -> "UserTable":
        return cls(schema, user_ids, np.ascontiguousarray(codes, dtype=np.int32), vocabularies)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def index_of(self, user_id: str) -> int:
        try:
            return self._id_index[user_id]
        except KeyError:
            raise DataError(f"unknown user_id {user_id!r}") from None

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._id_index

    def column(self, type_name: str) -> np.ndarray:
        return self.codes[:, self.schema.index_of(type_name)]

    def vocabulary(self, type_name: str) -> list[str]:
        return self.vocabularies[self.schema.index_of(type_name)]

    def value_of(self, user_index: int, type_name: str) -> str:
        j = self.schema.index_of(type_name)
        return self.vocabularies[j][self.codes[user_index, j]]

    def attributes_of(self, user_id: str) -> dict:
        i = self.index_of(user_id)
        return {name: self.vocabularies[j][self.codes[i, j]]
                for j, name in enumerate(self.schema.names)}

    def record(self, user_id: str) -> UserRecord:
        return UserRecord(user_id, self.attributes_of(user_id))

    def records(self) -> Iterator[UserRecord]:
        for uid in self.user_ids:
            yield self.record(uid)


def _delimiter_for(path: Path) -> str:
    return "\t" if path.suffix.lower() in (".tsv", ".tab") else ","


def load_users(path, schema: AttributeSchema) -> UserTable:
    """Read a delimited user-attribute file (header row, `user_id` column).

    Attribute columns absent from the file, and empty cells, become NULL.
    Row order is preserved; duplicate ids and ragged rows are errors.
    """
    path = Path(path)
    records: list[tuple[str, dict]] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=_delimiter_for(path))
        header = next(reader, None)
        if header is None:
            return UserTable.from_records(schema, [])
        if "user_id" not in header:
            raise DataError(f"{path}: missing required column 'user_id'")
        uid_col = header.index("user_id")
        attr_cols = {name: header.index(name) for name in schema.names if name in header}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            uid = row[uid_col]
            if not uid:
                raise DataError(f"{path}: line {lineno}: empty user_id")
            if uid in seen:
                raise DataError(f"{path}: line {lineno}: duplicate user_id {uid!r}")
            seen.add(uid)
            attrs = {name: (row[col] or NULL) for name, col in attr_cols.items()}
            records.append((uid, attrs))
    return UserTable.from_records(schema, records)


class EngagementTable:
    """Per-(user, item) engagement scores in two windows, training and holdout.

    Duplicate (user, item, window) rows are summed at construction. Rows are
    stored index-coded, sorted by (user, item).
    """

    def __init__(self, users: UserTable, item_ids: Sequence[str],
                 train: tuple[np.ndarray, np.ndarray, np.ndarray],
                 holdout: tuple[np.ndarray, np.ndarray, np.ndarray]):
        self.users = users
        self.item_ids = list(item_ids)
        self._item_index = {it: j for j, it in enumerate(self.item_ids)}
        if any(self.item_ids[j] >= self.item_ids[j + 1] for j in range(len(self.item_ids) - 1)):
            raise DataError("item vocabulary is not sorted and unique")
        self.train_user, self.train_item, self.train_score = train
        self.holdout_user, self.holdout_item, self.holdout_score = holdout

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_users(self) -> int:
        return self.users.n_users

    def item_index(self, item_id: str) -> int:
        try:
            return self._item_index[item_id]
        except KeyError:
            raise DataError(f"unknown item_id {item_id!r}") from None

    @staticmethod
    def _dedupe(user: np.ndarray, item: np.ndarray, score: np.ndarray,
                n_items: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if user.size == 0:
            return (np.empty(0, np.int32), np.empty(0, np.int32), np.empty(0, np.float64))
        key = user.astype(np.int64) * n_items + item
        unique_keys, inverse = np.unique(key, return_inverse=True)
        sums = np.bincount(inverse, weights=score, minlength=unique_keys.size)
        return ((unique_keys // n_items).astype(np.int32),
                (unique_keys % n_items).astype(np.int32),
                sums)

    @classmethod
    def from_rows(cls, users: UserTable,
                  rows: Iterable[tuple[str, str, float, str]]) -> "EngagementTable":
        staged: dict[str, list[tuple[int, str, float]]] = {TRAINING: [], HOLDOUT: []}
        items: set[str] = set()
        for uid, item, score, window in rows:
            if window not in WINDOWS:
                raise DataError(f"unknown window tag {window!r} (expected one of {WINDOWS})")
            if not (score >= 0):
                raise DataError(f"negative engagement score {score!r} for user {uid!r}")
            if uid not in users:
                raise DataError(f"user {uid!r} in engagements missing from user table")
            staged[window].append((users.index_of(uid), item, float(score)))
            items.add(item)
        item_ids = sorted(items)
        item_index = {it: j for j, it in enumerate(item_ids)}
        packed = {}
        for window, triples in staged.items():
            u = np.fromiter((t[0] for t in triples), dtype=np.int32, count=len(triples))
            i = np.fromiter((item_index[t[1]] for t in triples), dtype=np.int32, count=len(triples))
            s = np.fromiter((t[2] for t in triples), dtype=np.float64, count=len(triples))
            packed[window] = cls._dedupe(u, i, s, max(len(item_ids), 1))
        return cls(users, item_ids, packed[TRAINING], packed[HOLDOUT])

    @classmethod
    def from_codes(cls, users: UserTable, item_ids: Sequence[str],
                   train_user, train_item, train_score,
                   holdout_user, holdout_item, holdout_score) -> "EngagementTable":
        n_items = max(len(item_ids), 1)
        train = cls._dedupe(np.asarray(train_user, np.int32), np.asarray(train_item, np.int32),
                            np.asarray(train_score, np.float64), n_items)
        holdout = cls._dedupe(np.asarray(holdout_user, np.int32), np.asarray(holdout_item, np.int32),
                              np.asarray(holdout_score, np.float64), n_items)
        return cls(users, item_ids, train, holdout)

    def training_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.train_user, self.train_item, self.train_score

    def holdout_rows(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.holdout_user, self.holdout_item, self.holdout_score

    def training_counts(self) -> np.ndarray:
        return np.bincount(self.train_user, minlength=self.n_users)

    def holdout_counts(self) -> np.ndarray:
        return np.bincount(self.holdout_user, minlength=self.n_users)

    def items_of(self, user_id: str, window: str = HOLDOUT) -> dict:
        """The user's deduplicated (item_id -> score) rows in one window."""
        if window not in WINDOWS:
            raise DataError(f"unknown window tag {window!r}")
        u, i, s = self.training_rows() if window == TRAINING else self.holdout_rows()
        idx = self.users.index_of(user_id)
        lo = np.searchsorted(u, idx, side="left")
        hi = np.searchsorted(u, idx, side="right")
        return {self.item_ids[i[r]]: float(s[r]) for r in range(lo, hi)}


def load_engagements(path, users: UserTable) -> EngagementTable:
    """Read a delimited engagement file with columns user_id, item_id, score, window."""
    path = Path(path)
    required = ("user_id", "item_id", "score", "window")
    rows: list[tuple[str, str, float, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=_delimiter_for(path))
        header = next(reader, None)
        if header is None:
            return EngagementTable.from_rows(users, [])
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing required columns: {missing}")
        cols = [header.index(c) for c in required]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            uid, item, raw_score, window = (row[c] for c in cols)
            try:
                score = float(raw_score)
            except ValueError:
                raise DataError(f"{path}: line {lineno}: bad score {raw_score!r}") from None
            if not (score >= 0):
                raise DataError(f"{path}: line {lineno}: negative score {raw_score!r}")
            if window not in WINDOWS:
                raise DataError(f"{path}: line {lineno}: unknown window {window!r}")
            if uid not in users:
                raise DataError(f"{path}: line {lineno}: user {uid!r} missing from user table")
            rows.append((uid, item, score, window))
    return EngagementTable.from_rows(users, rows)


@dataclass(frozen=True)
class ActivityRule:
    """Active users have at least `min_training_rows` distinct training
    engagements; every other user is marginal."""

    min_training_rows: int = 1


class UserClassification:
    """Partition of the universe into active and marginal users."""

    def __init__(self, users: UserTable, active_mask: np.ndarray):
        self.users = users
        self.active_mask = np.ascontiguousarray(active_mask, dtype=bool)
        if self.active_mask.shape != (users.n_users,):
            raise DataError("classification mask does not cover the user universe")

    @property
    def n_active(self) -> int:
        return int(self.active_mask.sum())

    @property
    def n_marginal(self) -> int:
        return self.users.n_users - self.n_active

    @property
    def active(self) -> set:
        return {u for u, a in zip(self.users.user_ids, self.active_mask) if a}

    @property
    def marginal(self) -> set:
        return {u for u, a in zip(self.users.user_ids, self.active_mask) if not a}

    def is_active(self, user_id: str) -> bool:
        return bool(self.active_mask[self.users.index_of(user_id)])


def classify_users(engagements: EngagementTable,
                   rule: ActivityRule = ActivityRule()) -> UserClassification:
    """Split the universe by training-window activity.

    Users below the activity threshold are marginal even when they have no
    holdout behavior at all; such users simply contribute zero reward terms.
    """
    counts = engagements.training_counts()
    return UserClassification(engagements.users, counts >= rule.min_training_rows)


@dataclass(frozen=True)
class BucketRange:
    lo: float
    hi: float
    label: str


class BucketSpec:
    """Named half-open ranges [lo, hi) that discretize one numeric attribute."""

    def __init__(self, name: str, ranges: Sequence[BucketRange]):
        self.name = name
        self.ranges = sorted(ranges, key=lambda r: r.lo)
        labels = [r.label for r in self.ranges]
        if len(set(labels)) != len(labels):
            raise DataError(f"bucket spec {name!r} reuses a label")
        for r in self.ranges:
            if not r.lo < r.hi:
                raise DataError(f"bucket spec {name!r}: empty range {r.label!r}")
        for a, b in zip(self.ranges, self.ranges[1:]):
            if b.lo < a.hi:
                raise DataError(f"bucket spec {name!r}: ranges {a.label!r} and {b.label!r} overlap")
        self._lows = [r.lo for r in self.ranges]
        self._by_label = {r.label: r for r in self.ranges}

    def bucketize(self, value: float) -> str:
        idx = bisect_right(self._lows, value) - 1
        if idx >= 0 and value < self.ranges[idx].hi:
            return self.ranges[idx].label
        return NULL

    def representative(self, label: str) -> float:
        """A value guaranteed to bucketize back to `label`."""
        try:
            return self._by_label[label].lo
        except KeyError:
            raise DataError(f"bucket spec {self.name!r} has no label {label!r}") from None


def bucketize(value: float, spec: BucketSpec) -> str:
    """Total function: label of the containing range, NULL when out of domain."""
    return spec.bucketize(value)
