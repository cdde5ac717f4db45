"""Synthetic traffic-like series for demos and tests.

Generates a daily sinusoid with weekly modulation plus AR(1) noise on the
15-minute grid, clipped to non-negative counts. Also usable as a script to
write sensor CSV files: python -m flowcast.synth --out-dir data --sensors 5
"""

from __future__ import annotations

import argparse
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

SLOTS_PER_DAY = 96
SLOTS_PER_WEEK = 7 * SLOTS_PER_DAY


def traffic_series(n: int, seed: int = 0, base: float = 120.0,
                   daily_amplitude: float = 80.0, weekly_amplitude: float = 0.3,
                   ar_coeff: float = 0.8, noise_scale: float = 18.0) -> np.ndarray:
    """Length-n array of synthetic vehicle counts per 15-minute slot."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    daily = np.sin(2.0 * np.pi * t / SLOTS_PER_DAY - 0.5 * np.pi)
    weekly = 1.0 + weekly_amplitude * np.sin(2.0 * np.pi * t / SLOTS_PER_WEEK)
    signal = base + daily_amplitude * daily * weekly
    noise = np.empty(n)
    eps = rng.standard_normal(n) * noise_scale
    acc = 0.0
    for i in range(n):
        acc = ar_coeff * acc + eps[i]
        noise[i] = acc
    return np.clip(signal + noise, 0.0, None)


def write_sensor_csv(path: str | Path, values: np.ndarray,
                     start: datetime | None = None,
                     missing_slots: list[int] | None = None) -> None:
    """Write a series in the raw ingestion format (empty flow = missing)."""
    start = start or datetime(2017, 1, 1)
    missing = set(missing_slots or [])
    lines = ["timestamp,flow"]
    for i, v in enumerate(values):
        ts = start + timedelta(seconds=900 * i)
        flow = "" if i in missing else f"{v:.3f}"
        lines.append(f"{ts.isoformat()},{flow}")
    Path(path).write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="generate synthetic sensor files")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--sensors", type=int, default=5)
    parser.add_argument("--days", type=int, default=28)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--missing-per-sensor", type=int, default=0,
                        help="number of randomly blanked slots per sensor")
    args = parser.parse_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = args.days * SLOTS_PER_DAY
    rng = np.random.default_rng(args.seed)
    for s in range(args.sensors):
        values = traffic_series(n, seed=args.seed + 1000 * s)
        missing = (sorted(rng.choice(n, size=args.missing_per_sensor, replace=False).tolist())
                   if args.missing_per_sensor else None)
        write_sensor_csv(out / f"atr{s:03d}.csv", values, missing_slots=missing)
    print(f"wrote {args.sensors} sensor files of {n} slots to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
