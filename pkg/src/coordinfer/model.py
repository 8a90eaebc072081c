"""Problem representation, synthetic data generation, and seeded random streams.

Conventions
-----------
- Design matrices are dense, shape (n, p); column j is the j-th predictor.
- The coordinate of interest is always column 0.
- Responses follow Y = X @ beta + eps with eps i.i.d. standard normal;
  the noise variance is fixed at 1 and never estimated.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError

BETA_PATTERNS = ("fixed_values", "equal_magnitude", "decaying")
DESIGN_KINDS = ("iid_standard_normal", "identity_scaled", "user_supplied")

_U64 = (1 << 64) - 1


def derive_stream(seed: int, label: str, index: int) -> np.random.Generator:
    """Deterministic, statistically independent generator per (seed, label, index).

    The label is folded in through a stable digest so derived streams do not
    depend on Python's per-process string hashing.  Identical triples yield
    bit-identical streams; distinct triples yield independent ones.

    Parameters
    ----------
    seed : int
        Base seed (64-bit; negative values are masked).
    label : str
        Purpose tag, e.g. ``"noise"`` or ``"rep"``.
    index : int
        Sub-stream index, e.g. a replication number.
    """
    tag = int.from_bytes(
        hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "big"
    )
    ss = np.random.SeedSequence(entropy=int(seed) & _U64, spawn_key=(tag, int(index) & _U64))
    return np.random.default_rng(ss)


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RegressionInstance:
    """One regression problem: design, response, and (optionally) the truth.

    Attributes
    ----------
    n, p : int
        Sample count and coordinate count.
    X : ndarray (n, p)
        Design matrix.
    Y : ndarray (n,)
        Response vector.
    beta_true : ndarray (p,) or None
        Ground-truth coefficients when the instance is synthetic.
    s_star : int
        True support size; must equal the nonzero count of ``beta_true``
        when that is present.
    seed : int
        Seed the instance was generated from (0 for hand-built instances).
    """

    n: int
    p: int
    X: np.ndarray
    Y: np.ndarray
    beta_true: np.ndarray | None
    s_star: int
    seed: int = 0

    def __post_init__(self):
        X = _readonly(self.X)
        Y = _readonly(self.Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if X.ndim != 2 or X.shape != (self.n, self.p):
            raise DimensionError(
                f"X must have shape ({self.n}, {self.p}), got {X.shape}"
            )
        if Y.shape != (self.n,):
            raise DimensionError(f"Y must have length {self.n}, got shape {Y.shape}")
        if self.s_star < 0 or self.s_star > self.p:
            raise ConfigurationError(f"s_star={self.s_star} must lie in [0, p={self.p}]")
        if self.beta_true is not None:
            beta = _readonly(self.beta_true)
            object.__setattr__(self, "beta_true", beta)
            if beta.shape != (self.p,):
                raise DimensionError(
                    f"beta_true must have length {self.p}, got shape {beta.shape}"
                )
            nnz = int(np.count_nonzero(beta))
            if nnz != self.s_star:
                raise ConfigurationError(
                    f"beta_true has {nnz} nonzeros but s_star={self.s_star}"
                )

    @property
    def lambda_n(self) -> float:
        """Universal penalty scale sqrt(log p / n)."""
        return float(np.sqrt(np.log(self.p) / self.n))

    def noise(self) -> np.ndarray:
        """Reconstruct the realized noise Y - X @ beta_true (truth required)."""
        if self.beta_true is None:
            raise ConfigurationError("noise() requires beta_true")
        return self.Y - self.X @ self.beta_true


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Recipe for a synthetic :class:`RegressionInstance`.

    ``beta_pattern`` selects how the nonzero coefficients are filled in:

    - ``"fixed_values"``: the entries of ``values`` (length ``s_star``),
      placed on the sorted support in order;
    - ``"equal_magnitude"``: every nonzero equals ``level`` exactly;
    - ``"decaying"``: geometric decay ``level * 2**-k`` for k = 0..s_star-1.

    ``design_kind`` selects the design matrix:

    - ``"iid_standard_normal"``: entries i.i.d. N(0, 1);
    - ``"identity_scaled"``: sqrt(n) times the identity (requires p <= n);
    - ``"user_supplied"``: ``design_matrix`` used as-is.
    """

    n: int
    p: int
    s_star: int
    beta_pattern: str = "equal_magnitude"
    level: float = 1.0
    values: tuple[float, ...] | None = None
    design_kind: str = "iid_standard_normal"
    design_matrix: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 2:
            raise DimensionError(f"need n >= 1 and p >= 2, got n={self.n}, p={self.p}")
        if self.s_star < 0 or self.s_star > self.p:
            raise ConfigurationError(f"s_star={self.s_star} must lie in [0, p={self.p}]")
        if self.beta_pattern not in BETA_PATTERNS:
            raise ConfigurationError(f"unknown beta_pattern {self.beta_pattern!r}")
        if self.design_kind not in DESIGN_KINDS:
            raise ConfigurationError(f"unknown design_kind {self.design_kind!r}")
        if self.beta_pattern == "fixed_values":
            if self.values is None or len(self.values) != self.s_star:
                raise ConfigurationError(
                    "fixed_values pattern needs a values tuple of length s_star"
                )
        if self.design_kind == "identity_scaled" and self.p > self.n:
            raise ConfigurationError("identity_scaled design requires p <= n")
        if self.design_kind == "user_supplied":
            if self.design_matrix is None:
                raise ConfigurationError("user_supplied design needs design_matrix")
            m = np.asarray(self.design_matrix, dtype=float)
            if m.shape != (self.n, self.p):
                raise DimensionError(
                    f"design_matrix must have shape ({self.n}, {self.p}), got {m.shape}"
                )


def _build_beta(spec: GeneratorSpec, support: np.ndarray) -> np.ndarray:
    beta = np.zeros(spec.p)
    if spec.s_star == 0:
        return beta
    if spec.beta_pattern == "equal_magnitude":
        beta[support] = spec.level
    elif spec.beta_pattern == "fixed_values":
        beta[support] = np.asarray(spec.values, dtype=float)
    else:  # decaying
        beta[support] = spec.level * 0.5 ** np.arange(spec.s_star)
    return beta


def generate(spec: GeneratorSpec) -> RegressionInstance:
    """Draw one instance from the spec; identical spec+seed is bit-identical.

    The support of ``beta_true`` is chosen uniformly among size-``s_star``
    subsets of the coordinates.  Three sub-streams of ``spec.seed`` are used
    ("support", "design", "noise"), so e.g. the noise realization can be
    regenerated on its own via :func:`derive_stream`.
    """
    support_rng = derive_stream(spec.seed, "support", 0)
    support = np.sort(support_rng.choice(spec.p, size=spec.s_star, replace=False))

    if spec.design_kind == "iid_standard_normal":
        X = derive_stream(spec.seed, "design", 0).standard_normal((spec.n, spec.p))
    elif spec.design_kind == "identity_scaled":
        X = np.sqrt(spec.n) * np.eye(spec.n, spec.p)
    else:
        X = np.array(spec.design_matrix, dtype=float, copy=True)

    beta = _build_beta(spec, support)
    eps = derive_stream(spec.seed, "noise", 0).standard_normal(spec.n)
    Y = X @ beta + eps
    return RegressionInstance(
        n=spec.n, p=spec.p, X=X, Y=Y, beta_true=beta, s_star=spec.s_star, seed=spec.seed
    )


def save_instance(instance: RegressionInstance, directory, stem: str = "instance") -> dict:
    """Write an instance as a CSV pair plus a JSON metadata sidecar.

    Files: ``{stem}_X.csv`` (matrix), ``{stem}_Y.csv`` (response),
    ``{stem}_meta.json`` (n, p, s_star, seed, beta_true).  Floats are written
    with 17 significant digits so the round trip is exact.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    x_path = directory / f"{stem}_X.csv"
    y_path = directory / f"{stem}_Y.csv"
    meta_path = directory / f"{stem}_meta.json"
    np.savetxt(x_path, instance.X, fmt="%.17e", delimiter=",")
    np.savetxt(y_path, instance.Y, fmt="%.17e", delimiter=",")
    meta = {
        "n": instance.n,
        "p": instance.p,
        "s_star": instance.s_star,
        "seed": instance.seed,
        "beta_true": None
        if instance.beta_true is None
        else [float(v) for v in instance.beta_true],
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return {"X": str(x_path), "Y": str(y_path), "meta": str(meta_path)}


def load_instance(directory, stem: str = "instance") -> RegressionInstance:
    """Read back an instance written by :func:`save_instance`."""
    directory = Path(directory)
    meta = json.loads((directory / f"{stem}_meta.json").read_text())
    X = np.loadtxt(directory / f"{stem}_X.csv", delimiter=",", ndmin=2)
    Y = np.loadtxt(directory / f"{stem}_Y.csv", delimiter=",", ndmin=1)
    beta = meta["beta_true"]
    return RegressionInstance(
        n=meta["n"],
        p=meta["p"],
        X=X,
        Y=Y,
        beta_true=None if beta is None else np.asarray(beta, dtype=float),
        s_star=meta["s_star"],
        seed=meta["seed"],
    )
