"""Crowd-flow forecasting on tessellated regions.

Thin Python layer over the native ``_flowcast`` module. Configs are plain
dicts with the same keys as the command-line JSON config; command results come
back as dicts.
"""

import json

from ._flowcast import (
    FlowcastError,
    Tessellation,
    VarModel,
    bbox_of_size,
    cpc,
    crowd_from_od,
    naive_predict,
    normalize_adjacency,
    nrmse,
    periodic_od,
    read_ods,
    rmse,
    synthetic_trips_csv,
    write_ods,
)
from . import _flowcast as _native

__all__ = [
    "FlowcastError",
    "Tessellation",
    "VarModel",
    "bbox_of_size",
    "cpc",
    "crowd_from_od",
    "evaluate",
    "export",
    "ingest",
    "naive_predict",
    "normalize_adjacency",
    "nrmse",
    "periodic_od",
    "predict",
    "read_ods",
    "rmse",
    "run_model",
    "synthetic_trips_csv",
    "train",
    "write_ods",
]


def _dump(config):
    return json.dumps(config or {})


def run_model(kind, series, config=None, bin_minutes=60, seed=0):
    """Fits ``kind`` ("naive", "var" or "crowdnet") on a (t, n, n) series and returns test metrics."""
    return json.loads(_native.run_model(kind, series, _dump(config), bin_minutes, seed))


def ingest(trips_csv, config, out_dir, workers=1):
    return json.loads(_native.ingest(str(trips_csv), _dump(config), str(out_dir), workers))


def train(ods, config, out_dir):
    return json.loads(_native.train(str(ods), _dump(config), str(out_dir)))


def predict(ods, checkpoint, out_dir):
    return json.loads(_native.predict(str(ods), str(checkpoint), str(out_dir)))


def _opt(path):
    return None if path is None else str(path)


def evaluate(ods, out_dir, checkpoint=None, pred_flow=None, pred_crowd=None, baselines=(), config=None):
    text = _native.evaluate(
        str(ods),
        _opt(checkpoint),
        _opt(pred_flow),
        _opt(pred_crowd),
        list(baselines),
        _dump(config),
        out_dir=str(out_dir),
    )
    return json.loads(text)


def export(geojson, out_dir, pred_flow=None, pred_crowd=None, ods=None, time_bin=None, include_self=False):
    text = _native.export(
        str(geojson),
        _opt(pred_flow),
        _opt(pred_crowd),
        _opt(ods),
        time_bin,
        include_self,
        out_dir=str(out_dir),
    )
    return json.loads(text)
