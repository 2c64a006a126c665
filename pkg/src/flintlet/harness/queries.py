"""The seven benchmark queries expressed as lineages over the trip schema.

Q0 counts lines; Q1/Q2 aggregate landmark drop-offs by hour with 30
partitions; Q3 is Q1 restricted to tips over $10; Q4 computes the monthly
credit-card payment fraction; Q5 counts rides by month and taxi type; Q6
buckets rides by the pickup date's precipitation, joined via a small
weather mapping broadcast into the per-record function.
"""

from __future__ import annotations

from ..errors import UnknownQueryError
from ..plan import COLLECT, COUNT, Lineage, filter_, map_, reduce_by_key
from ..registry import FunctionRegistry
from ..store import ObjectRef, ObjectStore
from .datagen import CITIGROUP_BOX, GOLDMAN_BOX, in_box

QUERY_IDS = tuple(range(7))

PRECIP_BUCKETS = ("0.00", "(0,0.1]", "(0.1,0.5]", ">0.5")


def precip_bucket(precip: float) -> str:
    if precip <= 0.0:
        return "0.00"
    if precip <= 0.1:
        return "(0,0.1]"
    if precip <= 0.5:
        return "(0.1,0.5]"
    return ">0.5"


def _split_csv(line: str) -> list[str]:
    return line.split(",")


def _inside_goldman(f: list[str]) -> bool:
    return in_box(float(f[4]), float(f[5]), GOLDMAN_BOX)


def _inside_citigroup(f: list[str]) -> bool:
    return in_box(float(f[4]), float(f[5]), CITIGROUP_BOX)


def _tip_over_10(f: list[str]) -> bool:
    return float(f[8]) > 10.0


def _dropoff_hour_one(f: list[str]) -> tuple[int, int]:
    return int(f[1][11:13]), 1


def _pickup_month_credit(f: list[str]) -> tuple[str, list[int]]:
    return f[0][:7], [1 if f[7] == "1" else 0, 1]


def _credit_fraction(rec) -> tuple[str, float]:
    month, (credit, total) = rec
    return month, credit / total


def _pickup_month_taxi(f: list[str]) -> tuple[str, int]:
    return f"{f[0][:7]}|{f[9]}", 1


def _pair_add(a, b):
    return [a[0] + b[0], a[1] + b[1]]


def register_query_functions(registry: FunctionRegistry) -> None:
    registry.register("csv_split", _split_csv)
    registry.register("inside_goldman", _inside_goldman)
    registry.register("inside_citigroup", _inside_citigroup)
    registry.register("tip_over_10", _tip_over_10)
    registry.register("dropoff_hour_one", _dropoff_hour_one)
    registry.register("pickup_month_credit", _pickup_month_credit)
    registry.register("credit_fraction", _credit_fraction)
    registry.register("pickup_month_taxi", _pickup_month_taxi)
    registry.register("pair_add", _pair_add)


def load_weather_map(store: ObjectStore, bucket: str, weather_key: str) -> dict[str, str]:
    """date -> precipitation bucket, read once on the driver and broadcast."""
    body = store.get_object(ObjectRef(bucket, weather_key)).decode("utf-8")
    mapping = {}
    for line in body.splitlines():
        if not line:
            continue
        date, precip = line.split(",")
        mapping[date] = precip_bucket(float(precip))
    return mapping


def register_weather_function(registry: FunctionRegistry, weather: dict[str, str]) -> None:
    def bucket_one(f: list[str]) -> tuple[str, int]:
        return weather[f[0][:10]], 1

    registry.register("precip_bucket_one", bucket_one)


def build_lineage(
    qid: int,
    bucket: str,
    data_prefix: str,
    partitions: int,
    registry: FunctionRegistry,
    store: ObjectStore,
    weather_key: str | None = None,
) -> Lineage:
    if qid not in QUERY_IDS:
        raise UnknownQueryError(f"query id {qid}")
    parse = map_("csv_split")
    if qid == 0:
        transforms = ()
        action = COUNT
    elif qid == 1:
        transforms = (
            parse,
            filter_("inside_goldman"),
            map_("dropoff_hour_one"),
            reduce_by_key("add", 30),
        )
        action = COLLECT
    elif qid == 2:
        transforms = (
            parse,
            filter_("inside_citigroup"),
            map_("dropoff_hour_one"),
            reduce_by_key("add", 30),
        )
        action = COLLECT
    elif qid == 3:
        transforms = (
            parse,
            filter_("inside_goldman"),
            filter_("tip_over_10"),
            map_("dropoff_hour_one"),
            reduce_by_key("add", partitions),
        )
        action = COLLECT
    elif qid == 4:
        transforms = (
            parse,
            map_("pickup_month_credit"),
            reduce_by_key("pair_add", partitions),
            map_("credit_fraction"),
        )
        action = COLLECT
    elif qid == 5:
        transforms = (
            parse,
            map_("pickup_month_taxi"),
            reduce_by_key("add", partitions),
        )
        action = COLLECT
    else:
        if weather_key is None:
            raise ValueError("Q6 needs the weather table key")
        weather = load_weather_map(store, bucket, weather_key)
        register_weather_function(registry, weather)
        transforms = (
            parse,
            map_("precip_bucket_one"),
            reduce_by_key("add", partitions),
        )
        action = COLLECT
    return Lineage(
        source_bucket=bucket,
        source_prefix=data_prefix,
        transformations=transforms,
        action=action,
    )


def canonical_result(qid: int, value):
    """Normalize a query result for comparison across execution modes."""
    if qid == 0:
        return int(value)
    pairs = [tuple(item) for item in value]
    if qid == 4:
        return {k: float(v) for k, v in pairs}
    return {k: int(v) for k, v in pairs}


def compare_results(qid: int, flint_value, local_value) -> str | None:
    """None when equivalent, else a description of the first difference."""
    a = canonical_result(qid, flint_value)
    b = canonical_result(qid, local_value)
    if qid == 0:
        return None if a == b else f"count {a} != {b}"
    for key in sorted(set(a) | set(b), key=str):
        if key not in a:
            return f"key {key!r} missing from flint result"
        if key not in b:
            return f"key {key!r} missing from local result"
        if qid == 4:
            denom = max(abs(a[key]), abs(b[key]), 1e-300)
            if abs(a[key] - b[key]) / denom > 1e-9:
                return f"key {key!r}: {a[key]!r} vs {b[key]!r}"
        elif a[key] != b[key]:
            return f"key {key!r}: {a[key]!r} vs {b[key]!r}"
    return None
