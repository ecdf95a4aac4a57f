"""Writes a small synthetic data set in the UCI multi-site air-quality layout.

200 hourly rows per station starting 2015-07-20 07:00, with scattered NA
values. Values are synthetic; only the file format matches the real corpus.
"""
import csv
import datetime as dt
import pathlib

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent
START = dt.datetime(2015, 7, 20, 7)
ROWS = 200
WIND = ["N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW"]
HEADER = ["No", "year", "month", "day", "hour", "PM2.5", "PM10", "SO2", "NO2", "CO", "O3",
          "TEMP", "PRES", "DEWP", "RAIN", "wd", "WSPM", "station"]


def stations():
    with open(HERE.parent / "beijing_stations.csv") as f:
        rows = [line for line in f if not line.startswith("#")]
    return [r["name"] for r in csv.DictReader(rows)]


def main():
    rng = np.random.default_rng(20150720)
    hours = np.arange(ROWS)
    daily = np.sin(2 * np.pi * (hours + 7) / 24)
    for idx, name in enumerate(stations()):
        pm25 = np.clip(60 + 30 * daily + np.cumsum(rng.normal(0, 4, ROWS)), 3, None)
        cols = {
            "PM2.5": pm25,
            "PM10": pm25 * 1.3 + rng.normal(0, 5, ROWS),
            "SO2": np.clip(5 + rng.normal(0, 1.5, ROWS), 1, None),
            "NO2": np.clip(40 - 10 * daily + rng.normal(0, 5, ROWS), 2, None),
            "CO": np.clip(800 + 200 * daily + rng.normal(0, 60, ROWS), 100, None),
            "O3": np.clip(90 + 60 * daily + rng.normal(0, 10, ROWS), 2, None),
            "TEMP": 27 + 5 * daily + rng.normal(0, 0.5, ROWS),
            "PRES": 1003 - idx * 0.4 + rng.normal(0, 0.6, ROWS),
            "DEWP": 20 + rng.normal(0, 1, ROWS),
            "WSPM": np.abs(1.8 + rng.normal(0, 0.7, ROWS)),
        }
        missing = rng.random((ROWS, len(cols))) < 0.02
        out = HERE / f"PRSA_Data_{name}_20150720-20150728.csv"
        with open(out, "w", newline="") as f:
            w = csv.writer(f, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
            w.writerow(HEADER)
            for t in range(ROWS):
                when = START + dt.timedelta(hours=t)
                vals = []
                for j, key in enumerate(cols):
                    v = round(float(cols[key][t]), 1)
                    vals.append("NA" if missing[t, j] else v)
                row = [t + 1, when.year, when.month, when.day, when.hour, *vals[:9], 0.0,
                       WIND[int(rng.integers(16))], vals[9], name]
                w.writerow(row)


if __name__ == "__main__":
    main()
