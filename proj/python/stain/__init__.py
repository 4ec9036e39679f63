"""Cough detection from 200 ms spectrogram slices, environmental exacerbation
risk, and cough-trend alert forecasting."""

import json

from ._core import (
    DataError,
    Model,
    NumericError,
    build_dataset,
    generate_fixtures,
    haversine_km,
    metrics,
    read_wav,
    risk_increase,
    spectrogram,
    train,
    write_wav,
)
from ._core import forecast as _forecast


def forecast(timestamps, env_pct=0.0, horizon_days=7, bucket_s=3600.0, reference_frequency=10.0, alert_threshold=1.5):
    """Returns (record dict, summary line)."""
    record, summary = _forecast(list(timestamps), env_pct, horizon_days, bucket_s, reference_frequency, alert_threshold)
    return json.loads(record), summary


__all__ = [
    "DataError",
    "Model",
    "NumericError",
    "build_dataset",
    "forecast",
    "generate_fixtures",
    "haversine_km",
    "metrics",
    "read_wav",
    "risk_increase",
    "spectrogram",
    "train",
    "write_wav",
]
