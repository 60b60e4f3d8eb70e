"""End-to-end scale benchmark: synthesize a training log, fit the baseline
model, simulate a month, and report timings, peak memory, and a linear
extrapolation to the 3M-agent / 30M-event operating point.

Run directly: ``python -m reposim.benchmark --users 100000 --out bench.json``.
The nightly full-scale variant (``--users 3000000``) is informational and
never gates the test suite.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .core import DAY_SECONDS
from .engine import RunStats, SimulationConfig, run
from .ingest import build_slice
from .manifest import peak_rss_mb
from .models import BaselineModel
from .synth import SynthConfig, generate

FULL_SCALE_AGENTS = 3_000_000
FULL_SCALE_EVENTS = 30_000_000


def scale_run(
    n_users: int = 100_000,
    days: float = 30.0,
    sim_days: float = 28.0,
    seed: int = 0,
    partitions: int = 1,
) -> dict:
    """Fit + simulate at the requested agent count; returns a report dict."""
    cfg = SynthConfig(
        variant="frozen",
        n_users=n_users,
        n_repos=max(1000, n_users // 5),
        days=days,
        seed=seed,
        # ~10 events per agent over the window, mirroring 30M over 3M agents
        rate_log_mean=float(np.log(0.35)),
        rate_log_sigma=0.3,
        rate_min=0.05,
        rate_max=3.0,
    )
    t0 = time.monotonic()
    log, _ = generate(cfg)
    t_gen = time.monotonic() - t0

    t0 = time.monotonic()
    slice_ = build_slice(log, cfg.window())
    model = BaselineModel().fit(slice_)
    t_fit = time.monotonic() - t0

    sim_window = (cfg.window()[1], cfg.window()[1] + sim_days * DAY_SECONDS)
    stats = RunStats()
    t0 = time.monotonic()
    out = run(
        SimulationConfig(window=sim_window, seed=seed, partitions=partitions),
        slice_,
        model,
        stats=stats,
    )
    t_sim = time.monotonic() - t0

    pipeline_seconds = t_fit + t_sim
    total_events = len(log) + len(out)
    events_per_second = total_events / max(pipeline_seconds, 1e-9)
    peak_mb = peak_rss_mb()
    return {
        "n_users": n_users,
        "train_events": len(log),
        "sim_events": len(out),
        "partitions": partitions,
        "generate_seconds": round(t_gen, 2),
        "fit_seconds": round(t_fit, 2),
        "simulate_seconds": round(t_sim, 2),
        "pipeline_seconds": round(pipeline_seconds, 2),
        "peak_rss_mb": round(peak_mb, 1),
        "events_per_second": round(events_per_second, 1),
        "extrapolation": {
            "target_agents": FULL_SCALE_AGENTS,
            "target_events": FULL_SCALE_EVENTS,
            "projected_minutes": round(
                FULL_SCALE_EVENTS / events_per_second / 60.0, 1
            ),
            "projected_peak_gb": round(
                peak_mb / 1024.0 * (FULL_SCALE_AGENTS / max(n_users, 1)), 1
            ),
        },
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, default=100_000)
    parser.add_argument("--sim-days", type=float, default=28.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--partitions", type=int, default=1)
    parser.add_argument("--out", help="write the report as JSON here")
    args = parser.parse_args(argv)
    report = scale_run(
        n_users=args.users,
        sim_days=args.sim_days,
        seed=args.seed,
        partitions=args.partitions,
    )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
