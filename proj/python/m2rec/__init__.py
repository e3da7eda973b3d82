"""Python access to the m2rec native core."""

import json

from ._m2rec import (
    Error,
    fft,
    ifft,
    metrics_json,
    power_spectrum,
    run_cli,
    spectral_filter,
    synthetic,
    target_rank,
    timing_bench,
)


def metrics(ranks, histories, ks=(1, 5, 10, 20)):
    """HR/NDCG/MRR report for precomputed ranks, as a dict."""
    return json.loads(metrics_json(list(ranks), list(histories), list(ks)))


__all__ = [
    "Error",
    "fft",
    "ifft",
    "metrics",
    "power_spectrum",
    "run_cli",
    "spectral_filter",
    "synthetic",
    "target_rank",
    "timing_bench",
]
