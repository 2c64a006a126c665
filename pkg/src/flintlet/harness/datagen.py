"""Deterministic synthetic taxi-trip generator.

Desk-scale stand-in for the NYC trip dataset: header-free CSV rows

    pickup_datetime, dropoff_datetime, pickup_lon, pickup_lat,
    dropoff_lon, dropoff_lat, trip_distance, payment_type, tip_amount,
    taxi_type

(dropoff_datetime is column index 1 by schema definition). Output is
byte-identical for a given (records, seed): trips are spread contiguously
over the requested number of part objects under ``<prefix>/data/``, with a
companion ``<prefix>/weather.csv`` of one precipitation row per generated
date.

Landmark bounding boxes are fixed synthetic rectangles inside the
generator's coordinate domain; a slice of drop-offs is biased into a
downtown hotspot so the landmark queries have non-trivial answers.
"""

from __future__ import annotations

import datetime as dt
import random

from ..store import ObjectRef, ObjectStore

LON_RANGE = (-74.05, -73.75)
LAT_RANGE = (40.60, 40.92)
# (lon_min, lon_max, lat_min, lat_max)
GOLDMAN_BOX = (-74.017, -74.012, 40.713, 40.717)
CITIGROUP_BOX = (-74.013, -74.008, 40.719, 40.723)
HOTSPOT_BOX = (-74.020, -74.005, 40.710, 40.725)
HOTSPOT_FRACTION = 0.10

_EPOCH_START = dt.datetime(2015, 1, 1)
_YEAR_SECONDS = 365 * 24 * 3600


def in_box(lon: float, lat: float, box: tuple[float, float, float, float]) -> bool:
    lon_min, lon_max, lat_min, lat_max = box
    return lon_min <= lon <= lon_max and lat_min <= lat <= lat_max


def _iso(ts: dt.datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%S")


def _trip_row(rng: random.Random) -> str:
    pickup = _EPOCH_START + dt.timedelta(seconds=rng.randrange(_YEAR_SECONDS))
    dropoff = pickup + dt.timedelta(seconds=rng.randrange(60, 7200))
    plon = rng.uniform(*LON_RANGE)
    plat = rng.uniform(*LAT_RANGE)
    if rng.random() < HOTSPOT_FRACTION:
        dlon = rng.uniform(HOTSPOT_BOX[0], HOTSPOT_BOX[1])
        dlat = rng.uniform(HOTSPOT_BOX[2], HOTSPOT_BOX[3])
    else:
        dlon = rng.uniform(*LON_RANGE)
        dlat = rng.uniform(*LAT_RANGE)
    distance = rng.uniform(0.3, 30.0)
    payment = 1 if rng.random() < 0.6 else 2
    tip = rng.uniform(0.0, 25.0) if payment == 1 else 0.0
    taxi = "yellow" if rng.random() < 0.8 else "green"
    return (
        f"{_iso(pickup)},{_iso(dropoff)},{plon:.6f},{plat:.6f},"
        f"{dlon:.6f},{dlat:.6f},{distance:.2f},{payment},{tip:.2f},{taxi}"
    )


def generate_weather(seed: int) -> list[tuple[str, float]]:
    """One (date, precipitation_inches) row per 2015 date."""
    rng = random.Random(seed + 1)
    day = dt.date(2015, 1, 1)
    rows = []
    while day.year == 2015:
        precip = 0.0 if rng.random() < 0.55 else round(rng.uniform(0.01, 1.2), 2)
        rows.append((day.isoformat(), precip))
        day += dt.timedelta(days=1)
    return rows


def generate_dataset(
    store: ObjectStore,
    bucket: str,
    prefix: str,
    n_records: int,
    seed: int,
    parts: int,
) -> list[str]:
    """Write the trip parts and weather table; returns the keys written."""
    if n_records < 0 or parts < 1:
        raise ValueError("need n_records >= 0 and parts >= 1")
    rng = random.Random(seed)
    base, extra = divmod(n_records, parts)
    keys = []
    for i in range(parts):
        count = base + (1 if i < extra else 0)
        body = "".join(_trip_row(rng) + "\n" for _ in range(count))
        key = f"{prefix.rstrip('/')}/data/part-{i:05d}"
        store.put_object(ObjectRef(bucket, key), body.encode("utf-8"))
        keys.append(key)

    weather_key = f"{prefix.rstrip('/')}/weather.csv"
    weather = "".join(f"{d},{p:.2f}\n" for d, p in generate_weather(seed))
    store.put_object(ObjectRef(bucket, weather_key), weather.encode("utf-8"))
    keys.append(weather_key)
    return keys
