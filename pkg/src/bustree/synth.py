"""Synthetic universe generator with planted segment structure.

A subset of "governing" attributes defines taste signatures; every signature
owns a disjoint pool of items. Active users engage mostly inside their
signature's pool (plus uniform noise), marginal users reveal the same taste
only through holdout rows, and silent users have no behavior at all. A tree
built on such data should recover the governing attributes as its top levels.

Everything is drawn from one seeded generator, so a config is a complete,
reproducible description of the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import (NULL, AttributeSchema, AttributeType, DataError,
                   EngagementTable, UserRecord, UserTable)
from .social import SocialGraph


@dataclass(frozen=True)
class AttrSpec:
    """One synthetic attribute: value count, missingness, prerequisites."""

    name: str
    cardinality: int
    null_rate: float = 0.0
    prerequisites: tuple = ()

    def __post_init__(self):
        if self.cardinality < 1:
            raise DataError(f"attribute {self.name!r} needs at least one value")
        if not (0.0 <= self.null_rate < 1.0):
            raise DataError(f"attribute {self.name!r} null_rate must be in [0, 1)")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_users: int = 5000
    n_items: int = 2000
    attributes: tuple = (
        AttrSpec("geo", 4),
        AttrSpec("age_band", 3),
        AttrSpec("channel", 5, null_rate=0.1),
    )
    governing: tuple = ("geo", "age_band")
    items_per_segment: int = 40
    active_fraction: float = 0.5
    silent_fraction: float = 0.05
    training_rows_mean: float = 6.0
    holdout_rows_mean: float = 5.0
    score_max: int = 5
    noise_rate: float = 0.1
    n_edges: int = 0
    homophily: float = 0.8

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DataError("synthetic attribute names must be unique")
        unknown = [g for g in self.governing if g not in names]
        if unknown:
            raise DataError(f"governing attributes not in the spec list: {unknown}")
        by_name = {a.name: a for a in self.attributes}
        leaky = [g for g in self.governing if by_name[g].null_rate > 0]
        if leaky:
            raise DataError(f"governing attributes must have null_rate 0: {leaky}")
        if not (0.0 <= self.noise_rate <= 1.0):
            raise DataError("noise_rate must be in [0, 1]")
        if not (0.0 <= self.active_fraction <= 1.0):
            raise DataError("active_fraction must be in [0, 1]")
        if not (0.0 <= self.silent_fraction < 1.0):
            raise DataError("silent_fraction must be in [0, 1)")


@dataclass
class SynthData:
    config: SynthConfig
    users: UserTable
    engagements: EngagementTable
    graph: SocialGraph
    signature: np.ndarray          # planted taste signature per user
    pools: np.ndarray              # item codes, one row of pool items per signature

    @property
    def n_signatures(self) -> int:
        return self.pools.shape[0]


def _value_names(cardinality: int) -> list[str]:
    width = len(str(max(cardinality - 1, 0)))
    return [f"v{j:0{width}d}" for j in range(cardinality)]


def _id_block(prefix: str, count: int) -> list[str]:
    width = len(str(max(count - 1, 0)))
    return [f"{prefix}{j:0{width}d}" for j in range(count)]


def generate_synthetic(config: SynthConfig) -> SynthData:
    rng = np.random.default_rng(config.seed)
    schema = AttributeSchema([
        AttributeType(a.name, frozenset(_value_names(a.cardinality)),
                      frozenset(a.prerequisites))
        for a in config.attributes
    ])
    n = config.n_users
    user_ids = _id_block("u", n)
    item_ids = _id_block("i", config.n_items)

    # attribute codes: 0 is NULL in every vocabulary ("NULL" sorts before "v*")
    vocabularies = []
    codes = np.empty((n, len(config.attributes)), dtype=np.int32)
    raw_codes = {}
    for j, spec in enumerate(config.attributes):
        vocab = [NULL] + _value_names(spec.cardinality)
        vocabularies.append(vocab)
        drawn = rng.integers(0, spec.cardinality, size=n)
        raw_codes[spec.name] = drawn
        col = drawn + 1
        if spec.null_rate > 0:
            col = np.where(rng.random(n) < spec.null_rate, 0, col)
        codes[:, j] = col
    users = UserTable.from_codes(schema, user_ids, codes, vocabularies)

    # planted signature = mixed radix over the governing attributes
    signature = np.zeros(n, dtype=np.int64)
    n_signatures = 1
    for name in config.governing:
        card = next(a.cardinality for a in config.attributes if a.name == name)
        signature = signature * card + raw_codes[name]
        n_signatures *= card
    if n_signatures * config.items_per_segment > config.n_items:
        raise DataError(
            f"{n_signatures} signatures x {config.items_per_segment} pool items "
            f"exceed {config.n_items} items; raise n_items or shrink the pools")
    pools = rng.permutation(config.n_items)[
        :n_signatures * config.items_per_segment
    ].reshape(n_signatures, config.items_per_segment).astype(np.int64)

    # user roles: silent users have no rows, active users have training rows,
    # every other (marginal) user reveals taste in the holdout window only
    roles = rng.random(n)
    silent = roles < config.silent_fraction
    active = ~silent & (roles < config.silent_fraction
                        + (1 - config.silent_fraction) * config.active_fraction)
    marginal = ~silent & ~active

    def draw_rows(user_mask: np.ndarray, mean_rows: float):
        users_idx = np.flatnonzero(user_mask)
        if users_idx.size == 0:
            return (np.empty(0, np.int32), np.empty(0, np.int32),
                    np.empty(0, np.float64))
        per_user = 1 + rng.poisson(mean_rows, size=users_idx.size)
        row_user = np.repeat(users_idx, per_user)
        total = row_user.size
        pool_pick = pools[signature[row_user],
                          rng.integers(0, config.items_per_segment, size=total)]
        noise = rng.random(total) < config.noise_rate
        uniform_pick = rng.integers(0, config.n_items, size=total)
        row_item = np.where(noise, uniform_pick, pool_pick)
        row_score = rng.integers(1, config.score_max + 1, size=total).astype(np.float64)
        return row_user.astype(np.int32), row_item.astype(np.int32), row_score

    tu, ti, ts = draw_rows(active, config.training_rows_mean)
    hu, hi, hs = draw_rows(marginal, config.holdout_rows_mean)
    engagements = EngagementTable.from_codes(users, item_ids, tu, ti, ts, hu, hi, hs)

    graph = SocialGraph()
    if config.n_edges > 0 and n >= 2:
        by_signature = [np.flatnonzero(signature == s) for s in range(n_signatures)]
        same_sig = rng.random(config.n_edges) < config.homophily
        for e in range(config.n_edges):
            members = None
            if same_sig[e]:
                sig = int(signature[int(rng.integers(0, n))])
                if by_signature[sig].size >= 2:
                    members = by_signature[sig]
            if members is None:
                members = np.arange(n)
            a, b = rng.choice(members, size=2, replace=False)
            graph.add_edge(user_ids[int(a)], user_ids[int(b)])

    return SynthData(config, users, engagements, graph, signature, pools)


def make_novel_records(data: SynthData, n_novel: int, seed: int = 0,
                       unseen_value_rate: float = 1.0) -> list[UserRecord]:
    """Users that were not in the universe, for routing/insert experiments.

    Each novel user copies a random existing user's attributes; with
    probability `unseen_value_rate` one attribute is flipped to a brand-new
    value no builder has ever seen.
    """
    rng = np.random.default_rng(seed)
    schema = data.users.schema
    records = []
    for j in range(n_novel):
        donor = int(rng.integers(0, data.users.n_users))
        attrs = dict(data.users.attributes_of(data.users.user_ids[donor]))
        if rng.random() < unseen_value_rate:
            name = schema.names[int(rng.integers(0, len(schema.names)))]
            attrs[name] = f"zz_unseen_{j}"
        records.append(UserRecord(f"novel{j:06d}", attrs))
    return records
