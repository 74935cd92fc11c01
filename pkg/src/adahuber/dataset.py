"""Data model, CSV ingestion, and seeded synthetic data for sparse linear models."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "SimSpec",
    "make_rng",
    "student_t_sample",
    "generate",
    "load_csv",
    "write_csv",
]


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox generator behind an explicit SeedSequence.

    All randomness in the package flows through generators built here; normal
    deviates come from numpy's ziggurat (Generator.standard_normal), so a given
    seed reproduces every stream bit-for-bit.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class Dataset:
    """Design matrix X (n x p), response y (n), optional simulation truth.

    Arrays are validated (finite, shape-consistent) and marked read-only so a
    Dataset can be shared across concurrent fits. ``sigma_star`` is the error
    standard deviation; 0.0 is allowed for noiseless synthetic data.
    """

    X: np.ndarray
    y: np.ndarray
    beta_star: np.ndarray | None = None
    sigma_star: float | None = None

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float).ravel())
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("X must be a 2-d array with at least one row and column")
        if y.shape[0] != X.shape[0]:
            raise ValueError(
                f"y has length {y.shape[0]} but X has {X.shape[0]} rows"
            )
        if not np.isfinite(X).all():
            raise ValueError("X contains non-finite entries")
        if not np.isfinite(y).all():
            raise ValueError("y contains non-finite entries")
        beta = self.beta_star
        if beta is not None:
            beta = np.ascontiguousarray(np.asarray(beta, dtype=float).ravel())
            if beta.shape[0] != X.shape[1]:
                raise ValueError("beta_star length must equal the number of columns of X")
            if not np.isfinite(beta).all():
                raise ValueError("beta_star contains non-finite entries")
            if self.sigma_star is None:
                raise ValueError("beta_star requires sigma_star")
            if not (self.sigma_star >= 0.0):
                raise ValueError("sigma_star must be nonnegative")
            beta.flags.writeable = False
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "beta_star", beta)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _parse_dist(text: str) -> tuple[str, tuple[float, ...]]:
    text = text.strip()
    if "(" not in text:
        return text, ()
    name, _, rest = text.partition("(")
    if not rest.endswith(")"):
        raise ValueError(f"malformed distribution spec: {text!r}")
    body = rest[:-1].strip()
    args = tuple(float(a) for a in body.split(",")) if body else ()
    return name.strip(), args


@dataclass(frozen=True)
class SimSpec:
    """Recipe for one synthetic dataset y = X beta + noise.

    ``beta_values`` land on the first k coordinates (remaining p-k are zero).
    Distributions are compact strings: "gaussian_identity" or "student_t(df)"
    for covariates, "gaussian(sd)" or "student_t(df,scale)" for errors. These
    same strings appear in the JSON form of the spec.
    """

    n: int
    p: int
    k: int
    beta_values: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    covariate_dist: str = "gaussian_identity"
    error_dist: str = "gaussian(1.0)"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.k < 1:
            raise ValueError("n, p, k must be positive")
        if self.k > self.p:
            raise ValueError("sparsity k cannot exceed p")
        vals = tuple(float(v) for v in self.beta_values)
        if len(vals) != self.k:
            raise ValueError(f"beta_values must have length k={self.k}")
        object.__setattr__(self, "beta_values", vals)
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")
        name, args = _parse_dist(self.covariate_dist)
        if name == "gaussian_identity":
            if args:
                raise ValueError("gaussian_identity takes no parameters")
        elif name == "student_t":
            if len(args) != 1:
                raise ValueError("covariate student_t takes exactly (df)")
            self._check_df(args[0])
        else:
            raise ValueError(f"unknown covariate distribution {name!r}")
        name, args = _parse_dist(self.error_dist)
        if name == "gaussian":
            if len(args) != 1 or args[0] < 0:
                raise ValueError("gaussian error spec takes (sd) with sd >= 0")
        elif name == "student_t":
            if len(args) not in (1, 2):
                raise ValueError("error student_t takes (df) or (df, scale)")
            self._check_df(args[0])
            if len(args) == 2 and args[1] <= 0:
                raise ValueError("student_t scale must be positive")
        else:
            raise ValueError(f"unknown error distribution {name!r}")

    @staticmethod
    def _check_df(df: float):
        if df != int(df) or int(df) < 3:
            raise ValueError("student_t df must be an integer >= 3 (finite variance)")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "k": self.k,
            "beta_values": list(self.beta_values),
            "covariate_dist": self.covariate_dist,
            "error_dist": self.error_dist,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimSpec":
        known = {"n", "p", "k", "beta_values", "covariate_dist", "error_dist", "seed"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown SimSpec keys: {sorted(extra)}")
        return cls(
            n=int(d["n"]),
            p=int(d["p"]),
            k=int(d["k"]),
            beta_values=tuple(d["beta_values"]),
            covariate_dist=d.get("covariate_dist", "gaussian_identity"),
            error_dist=d.get("error_dist", "gaussian(1.0)"),
            seed=int(d.get("seed", 0)),
        )


def _student_t_draws(rng: np.random.Generator, df: int, size: int) -> np.ndarray:
    # Z / sqrt(chisq_df / df) with the chi-square assembled from df squared
    # standard normals; one row of (df + 1) normals is consumed per draw.
    draws = rng.standard_normal((size, df + 1))
    z = draws[:, 0]
    chisq = np.sum(draws[:, 1:] ** 2, axis=1)
    return z / np.sqrt(chisq / df)


def student_t_sample(df: int, rng: np.random.Generator) -> float:
    """One Student-t draw; advances rng by df + 1 standard normals."""
    if int(df) != df or df < 1:
        raise ValueError("df must be a positive integer")
    return float(_student_t_draws(rng, int(df), 1)[0])


def generate(spec: SimSpec) -> Dataset:
    """Draw a dataset per spec: covariates first (row-major), then errors.

    Deterministic given spec.seed. For student_t(df, scale) errors the stored
    sigma_star is scale * sqrt(df / (df - 2)).
    """
    rng = make_rng(spec.seed)
    cname, cargs = _parse_dist(spec.covariate_dist)
    if cname == "gaussian_identity":
        X = rng.standard_normal((spec.n, spec.p))
    else:
        X = _student_t_draws(rng, int(cargs[0]), spec.n * spec.p).reshape(spec.n, spec.p)
    ename, eargs = _parse_dist(spec.error_dist)
    if ename == "gaussian":
        sd = eargs[0]
        eps = sd * rng.standard_normal(spec.n)
        sigma_star = sd
    else:
        df = int(eargs[0])
        scale = eargs[1] if len(eargs) == 2 else 1.0
        eps = scale * _student_t_draws(rng, df, spec.n)
        sigma_star = scale * math.sqrt(df / (df - 2))
    beta = np.zeros(spec.p)
    beta[: spec.k] = spec.beta_values
    y = X @ beta + eps
    return Dataset(X, y, beta_star=beta, sigma_star=sigma_star)


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_csv(path, y_column="y") -> Dataset:
    """Read a numeric CSV into a Dataset.

    A header row is auto-detected (any non-numeric cell in the first row).
    ``y_column`` is a header name or a 0-based column position; the remaining
    columns become X in file order. Parse failures report the offending data
    row (1-based, header excluded) and column.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if any(cell.strip() for cell in row)]
    if not rows:
        raise ValueError(f"empty file: {path}")
    has_header = any(not _looks_numeric(c) for c in rows[0])
    if has_header:
        header = [c.strip() for c in rows[0]]
        data_rows = rows[1:]
        if not data_rows:
            raise ValueError(f"no data rows in {path}")
    else:
        header = [f"col{i + 1}" for i in range(len(rows[0]))]
        data_rows = rows

    ncol = len(header)
    if isinstance(y_column, int) or (isinstance(y_column, str) and y_column.lstrip("-").isdigit()):
        y_idx = int(y_column)
        if not (0 <= y_idx < ncol):
            raise ValueError(f"y column index {y_idx} out of range for {ncol} columns")
    else:
        if y_column not in header:
            raise ValueError(f"y column {y_column!r} not found; columns are {header}")
        y_idx = header.index(y_column)
    if ncol < 2:
        raise ValueError("file must have at least one covariate column besides y")

    values = np.empty((len(data_rows), ncol))
    for r, row in enumerate(data_rows, start=1):
        if len(row) != ncol:
            raise ValueError(f"ragged row {r}: got {len(row)} cells, expected {ncol}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(
                    f"parse failure at row {r}, column {header[c]!r}: {cell.strip()!r}"
                ) from None
            if not math.isfinite(v):
                raise ValueError(f"non-finite value at row {r}, column {header[c]!r}")
            values[r - 1, c] = v

    mask = np.ones(ncol, dtype=bool)
    mask[y_idx] = False
    return Dataset(values[:, mask], values[:, y_idx])


def write_csv(data: Dataset, path) -> None:
    """Write X and y with header x1..xp,y; floats via repr (exact round-trip)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(data.p)] + ["y"])
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))])
