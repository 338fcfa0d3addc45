"""Scalar diagnostics series and flat-record serialization."""

from __future__ import annotations

import numpy as np


class TimeSeries:
    """Ordered records of per-step scalar diagnostics.

    Rows are appended as dicts; columns are fixed by the first row.  The
    three clocks (t, tau, s) are expected to be strictly increasing and the
    recorded tau to be the trapezoid accumulation of M/R^d dt, which keeps
    the clock-chain relation dt = (R^d/M) dtau accurate between consecutive
    records.
    """

    def __init__(self, columns=None):
        self.columns = list(columns) if columns else None
        self._rows = []
        self.dimension = None

    def append(self, **record):
        if self.columns is None:
            self.columns = list(record.keys())
        missing = [c for c in self.columns if c not in record]
        if missing:
            raise ValueError(f"record missing columns {missing}")
        self._rows.append([float(record[c]) for c in self.columns])

    def __len__(self):
        return len(self._rows)

    def column(self, name):
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self._rows])

    def last(self, name):
        return self._rows[-1][self.columns.index(name)]

    def to_csv(self, path, columns=None):
        cols = columns if columns is not None else self.columns
        idx = [self.columns.index(c) for c in cols]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self._rows:
                fh.write(",".join("%.17g" % row[i] for i in idx) + "\n")

    def clock_chain_defect(self):
        """Max relative mismatch of dt vs (R^d/M) dtau between records.

        The factor R^d/M is taken as the trapezoid mean of its endpoint
        values, the same rule both recorders use, so a well-formed series
        passes at round-off.
        """
        if self.dimension is None:
            raise ValueError("set series.dimension before checking the clock chain")
        t = self.column("t")
        tau = self.column("tau")
        R = self.column("R")
        M = self.column("M")
        g = R ** self.dimension / M
        dt = np.diff(t)
        dtau = np.diff(tau)
        pred = dtau * 0.5 * (g[1:] + g[:-1])
        keep = dt > 0
        if not np.any(keep):
            return 0.0
        return float(np.max(np.abs(pred[keep] - dt[keep]) / dt[keep]))


def write_record(path, record):
    """Serialize a flat mapping as 'key = value' lines."""
    with open(path, "w") as fh:
        for key, val in record.items():
            if isinstance(val, float):
                fh.write("%s = %.17g\n" % (key, val))
            else:
                fh.write(f"{key} = {val}\n")


def read_record(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def read_csv(path):
    """Read a diagnostics CSV back into {column: array}."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {c: data[:, i] for i, c in enumerate(header)}
