import sys

import pytest

from bustree import (AttributeSchema, AttributeType, AttrSpec, EngagementTable,
                     SynthConfig, UserTable, classify_users, generate_synthetic)


def pytest_terminal_summary(terminalreporter):
    """Surface the acceptance verdict table past pytest's output capture."""
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)

# Hand-built dataset with a known best split, used by builder + acceptance
# tests. Two active users define the behavior lists; 580 marginal users with
# one holdout item each decide which attribute wins level 2.
#
# With k=1 every marginal user scores 1 when their single holdout item tops
# their segment's list, else 0, so level totals are exact integer counts:
#
#   root/country list = [z]      (z: 14+14=28 beats a:15, b:15)  -> total 0
#   split by city:  SF actives -> [a], NY actives -> [b]
#       SF: 100+80 a-users match = 180;  NY: 90+90 b-users match = 180 -> 360
#   split by age:   20s -> [a], 30s -> [b]
#       20s: 100+70 = 170;               30s: 60+90 = 150          -> 320
#
# so the builder must choose city (360) over age (320) at level 2.
MARGINAL_BLOCKS = {
    ("SF", "20s", "a"): 100,
    ("SF", "20s", "b"): 50,
    ("SF", "30s", "a"): 80,
    ("SF", "30s", "b"): 60,
    ("NY", "20s", "a"): 70,
    ("NY", "20s", "b"): 90,
    ("NY", "30s", "a"): 40,
    ("NY", "30s", "b"): 90,
}
CITY_TOTAL = 360.0
AGE_TOTAL = 320.0


def make_hand_dataset():
    schema = AttributeSchema([
        AttributeType("country", {"US"}),
        AttributeType("city", {"SF", "NY"}, prerequisites={"country"}),
        AttributeType("age", {"20s", "30s"}, prerequisites={"country"}),
    ])
    records = [
        ("A1", {"country": "US", "city": "SF", "age": "20s"}),
        ("A2", {"country": "US", "city": "NY", "age": "30s"}),
    ]
    rows = [
        ("A1", "a", 15.0, "training"), ("A1", "z", 14.0, "training"),
        ("A2", "b", 15.0, "training"), ("A2", "z", 14.0, "training"),
    ]
    serial = 0
    for (city, age, item), count in MARGINAL_BLOCKS.items():
        for _ in range(count):
            uid = f"m{serial:04d}"
            serial += 1
            records.append((uid, {"country": "US", "city": city, "age": age}))
            rows.append((uid, item, 1.0, "holdout"))
    users = UserTable.from_records(schema, records)
    engagements = EngagementTable.from_rows(users, rows)
    return users, engagements


@pytest.fixture(scope="session")
def hand_dataset():
    return make_hand_dataset()


SMALL_SYNTH = SynthConfig(
    seed=7, n_users=3000, n_items=1500,
    attributes=(AttrSpec("geo", 4), AttrSpec("age_band", 3),
                AttrSpec("channel", 6, null_rate=0.1),
                AttrSpec("device", 5, null_rate=0.05)),
    governing=("geo", "age_band"), items_per_segment=40, n_edges=600,
)


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SMALL_SYNTH)


@pytest.fixture(scope="session")
def small_classified(small_synth):
    return classify_users(small_synth.engagements)
