"""Trajectories, datasets, discounted returns and stage features."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

SCHEMAS = ("benchmark", "pricing", "tiny")
FORMAT_TAG = "mpe-lab/trajectories/v1"


class DatasetFormatError(ValueError):
    """Malformed dataset file; the message names the offending line."""


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One unit's observed path: T+1 covariate vectors, T actions, T rewards."""

    covariates: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    unit_id: int = 0

    def __post_init__(self):
        X = _frozen(self.covariates)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        A = _frozen(self.actions)
        R = _frozen(self.rewards)
        if A.ndim != 1 or R.shape != A.shape:
            raise ValueError("actions and rewards must be 1-d of equal length")
        if X.ndim != 2 or X.shape[0] != A.shape[0] + 1:
            raise ValueError(f"expected {A.shape[0] + 1} covariate rows, got {X.shape[0]}")
        if not (np.isfinite(X).all() and np.isfinite(A).all() and np.isfinite(R).all()):
            raise ValueError("trajectory contains non-finite entries")
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "actions", A)
        object.__setattr__(self, "rewards", R)
        object.__setattr__(self, "unit_id", int(self.unit_id))

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.unit_id == other.unit_id
            and np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Array-backed collection of equal-horizon trajectories.

    ``X`` has shape (n, T+1, p), ``A`` and ``R`` shape (n, T).
    """

    X: np.ndarray
    A: np.ndarray
    R: np.ndarray
    gamma: float = 1.0
    unit_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X, A, R = _frozen(self.X), _frozen(self.A), _frozen(self.R)
        if X.ndim != 3 or A.ndim != 2 or R.shape != A.shape or X.shape[:2] != (A.shape[0], A.shape[1] + 1):
            raise ValueError(f"inconsistent shapes X{X.shape} A{A.shape} R{R.shape}")
        if A.shape[1] < 1 or X.shape[2] < 1:
            raise ValueError("horizon and covariate dimension must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {self.gamma}")
        ids = np.arange(A.shape[0]) if self.unit_ids is None else self.unit_ids
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "unit_ids", _frozen(ids, np.int64))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def T(self) -> int:
        return self.A.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[2]

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(self.n):
            yield self[i]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.X[i], self.A[i], self.R[i], int(self.unit_ids[i]))

    @property
    def trajectories(self) -> list[Trajectory]:
        return list(self)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.A[idx], self.R[idx], self.gamma, self.unit_ids[idx])

    @classmethod
    def empty(cls, T: int, p: int, gamma: float = 1.0) -> "Dataset":
        return cls(np.zeros((0, T + 1, p)), np.zeros((0, T)), np.zeros((0, T)), gamma)

    @classmethod
    def from_trajectories(cls, trajs: Iterable[Trajectory], gamma: float = 1.0,
                          T: int | None = None, p: int | None = None) -> "Dataset":
        trajs = list(trajs)
        if not trajs:
            if T is None or p is None:
                raise ValueError("empty dataset needs explicit T and p")
            return cls.empty(T, p, gamma)
        shapes = {t.covariates.shape for t in trajs}
        if len(shapes) != 1:
            raise ValueError(f"trajectories disagree on (T+1, p): {sorted(shapes)}")
        return cls(
            np.stack([t.covariates for t in trajs]),
            np.stack([t.actions for t in trajs]),
            np.stack([t.rewards for t in trajs]),
            gamma,
            np.array([t.unit_id for t in trajs], dtype=np.int64),
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.gamma == other.gamma
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.R, other.R)
            and np.array_equal(self.unit_ids, other.unit_ids)
        )


# ---------------------------------------------------------------- returns

def discounted_return(traj: Trajectory, gamma: float, t: int) -> float:
    """Gamma_t = sum_{k=t}^T gamma^(k-t) R_k, with 1-based stage ``t``."""
    T = traj.horizon
    if not 1 <= t <= T:
        raise IndexError(f"stage {t} outside 1..{T}")
    r = traj.rewards[t - 1:]
    return float(np.sum(r * gamma ** np.arange(r.shape[0])))


def discounted_returns(R: np.ndarray, gamma: float) -> np.ndarray:
    """All Gamma_t at once by the backward recursion; column t-1 holds Gamma_t."""
    R = np.asarray(R, dtype=np.float64)
    G = np.empty_like(R)
    acc = np.zeros(R.shape[0])
    for t in range(R.shape[1] - 1, -1, -1):
        acc = R[:, t] + gamma * acc
        G[:, t] = acc
    return G


def welfare(ds: Dataset) -> np.ndarray:
    """Per-unit discounted welfare sum_k gamma^(k-1) R_k."""
    return ds.R @ (ds.gamma ** np.arange(ds.T))


# ---------------------------------------------------------------- features

def feature_dim(schema: str, p: int) -> int:
    if schema == "benchmark":
        return p + 3
    if schema == "pricing":
        return p
    if schema == "tiny":
        return 3
    raise KeyError(f"unknown feature schema {schema!r}")


def stage_feature_matrix(X: np.ndarray, A: np.ndarray, R: np.ndarray, t: int, schema: str) -> np.ndarray:
    """Stage-t features for a batch of histories; reads only X_{1:t}, A_{1:t-1}, R_{1:t-1}.

    benchmark: (X_t, A_{t-1}, R_{t-1}, t/T) with A_0 = R_0 = 0
    pricing:   X_t (already a summary of the observed history)
    tiny:      (X_t[0], A_{t-1}, t/T)
    """
    T = A.shape[1]
    if not 1 <= t <= T:
        raise IndexError(f"stage {t} outside 1..{T}")
    n = X.shape[0]
    xt = X[:, t - 1, :]
    a_prev = A[:, t - 2] if t > 1 else np.zeros(n)
    if schema == "benchmark":
        r_prev = R[:, t - 2] if t > 1 else np.zeros(n)
        return np.column_stack([xt, a_prev, r_prev, np.full(n, t / T)])
    if schema == "pricing":
        return np.array(xt, dtype=np.float64)
    if schema == "tiny":
        return np.column_stack([xt[:, 0], a_prev, np.full(n, t / T)])
    raise KeyError(f"unknown feature schema {schema!r}")


def stage_features(traj: Trajectory, t: int, schema: str) -> np.ndarray:
    return stage_feature_matrix(
        traj.covariates[None], traj.actions[None], traj.rewards[None], t, schema
    )[0]


def dataset_features(ds: Dataset, t: int, schema: str) -> np.ndarray:
    return stage_feature_matrix(ds.X, ds.A, ds.R, t, schema)


# ---------------------------------------------------------------- I/O

def write_jsonl(ds: Dataset, path: str | Path) -> None:
    """Header line with (T, p, gamma), then one trajectory record per line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": FORMAT_TAG, "T": ds.T, "p": ds.p, "gamma": ds.gamma}) + "\n")
        for i in range(ds.n):
            rec = {
                "unit_id": int(ds.unit_ids[i]),
                "X": ds.X[i].tolist(),
                "A": ds.A[i].tolist(),
                "R": ds.R[i].tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path: str | Path, gamma: float | None = None) -> Dataset:
    """Read trajectories; files without a header take T and p from the first record."""
    T = p = None
    header_gamma = None
    trajs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if "format" in rec:
                if lineno != 1 or rec["format"] != FORMAT_TAG:
                    raise DatasetFormatError(f"line {lineno}: unexpected header {rec.get('format')!r}")
                T, p, header_gamma = int(rec["T"]), int(rec["p"]), float(rec["gamma"])
                continue
            try:
                X = np.asarray(rec["X"], dtype=np.float64)
                A = np.asarray(rec["A"], dtype=np.float64)
                R = np.asarray(rec["R"], dtype=np.float64)
                uid = int(rec["unit_id"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"line {lineno}: malformed record ({exc})") from None
            if T is None:
                T, p = A.shape[0], (X.shape[1] if X.ndim == 2 else 0)
            if A.shape != (T,) or R.shape != (T,):
                raise DatasetFormatError(f"line {lineno}: expected horizon T={T}, got A{A.shape} R{R.shape}")
            if X.shape != (T + 1, p):
                raise DatasetFormatError(f"line {lineno}: expected X of shape {(T + 1, p)}, got {X.shape}")
            try:
                trajs.append(Trajectory(X, A, R, uid))
            except ValueError as exc:
                raise DatasetFormatError(f"line {lineno}: {exc}") from None
    g = gamma if gamma is not None else (header_gamma if header_gamma is not None else 1.0)
    if T is None:
        raise DatasetFormatError("file has neither header nor records")
    return Dataset.from_trajectories(trajs, g, T=T, p=p)


def dataset_roundtrip(ds: Dataset, path: str | Path) -> Dataset:
    write_jsonl(ds, path)
    return read_jsonl(path)


def write_long_csv(ds: Dataset, path: str | Path) -> None:
    """Long format (unit_id, t, x_1..x_p, a, r); the t=T+1 row has empty a and r."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit_id", "t"] + [f"x_{j + 1}" for j in range(ds.p)] + ["a", "r"])
        for i in range(ds.n):
            for t in range(ds.T + 1):
                a, r = (repr(float(ds.A[i, t])), repr(float(ds.R[i, t]))) if t < ds.T else ("", "")
                w.writerow([int(ds.unit_ids[i]), t + 1] + [repr(float(v)) for v in ds.X[i, t]] + [a, r])
