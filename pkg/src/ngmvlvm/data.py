"""Multi-view datasets: synthetic S-curve generation, CSV ingestion, label views, masks."""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, reference_gram

__all__ = [
    "MultiViewDataset",
    "SyntheticSpec",
    "make_s_curve_latents",
    "sample_gp_views",
    "synthetic_dataset",
    "make_missing_masks",
    "apply_masks",
    "append_label_view",
    "save_view_csv",
    "save_matrix_csv",
    "read_matrix_csv",
    "load_multiview_csv",
    "write_manifest",
    "load_manifest",
    "DATA_SCHEMA",
]

DATA_SCHEMA = "ngmvlvm-data-v1"


@dataclass
class MultiViewDataset:
    """``V`` observation matrices over the same ``N`` rows.

    ``masks[v]`` is a boolean ``(N, M_v)`` array marking missing entries (or
    ``None``); stored values at missing entries are zero.
    """

    views: list
    labels: np.ndarray | None = None
    masks: list | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.views = [np.atleast_2d(np.array(Y, dtype=float)) for Y in self.views]
        if not self.views:
            raise ValueError("a dataset needs at least one view")
        N = self.views[0].shape[0]
        for v, Y in enumerate(self.views):
            if Y.shape[0] != N:
                raise ValueError(f"view {v} has {Y.shape[0]} rows, view 0 has {N}")
        if self.masks is None:
            self.masks = [None] * len(self.views)
        if len(self.masks) != len(self.views):
            raise ValueError("need one mask entry per view")
        masks = []
        for v, (Y, m) in enumerate(zip(self.views, self.masks)):
            if m is not None:
                m = np.asarray(m, dtype=bool)
                if m.shape != Y.shape:
                    raise ValueError(f"mask {v} has shape {m.shape}, view has {Y.shape}")
                if not m.any():
                    m = None
                else:
                    Y[m] = 0.0
            masks.append(m)
        self.masks = masks
        if self.labels is not None:
            self.labels = np.asarray(self.labels).astype(int)
            if self.labels.shape != (N,):
                raise ValueError(f"labels must have shape ({N},), got {self.labels.shape}")

    @property
    def N(self) -> int:
        return self.views[0].shape[0]

    @property
    def V(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list:
        return [Y.shape[1] for Y in self.views]

    @property
    def has_missing(self) -> bool:
        return any(m is not None for m in self.masks)

    def standardization(self) -> list:
        """Per-view, per-column ``{"mean", "scale"}`` over observed entries.

        Zero-variance columns keep ``scale = 1`` (centred only) with a warning.
        """
        stats = []
        for v, (Y, m) in enumerate(zip(self.views, self.masks)):
            obs = np.ones(Y.shape, bool) if m is None else ~m
            count = obs.sum(axis=0)
            if np.any(count == 0):
                j = int(np.flatnonzero(count == 0)[0])
                raise ValueError(f"view {v} column {j} has no observed entries")
            mean = np.where(obs, Y, 0.0).sum(axis=0) / count
            var = np.where(obs, (Y - mean) ** 2, 0.0).sum(axis=0) / count
            scale = np.sqrt(var)
            flat = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
            if np.any(flat):
                warnings.warn(f"view {v}: columns {np.flatnonzero(flat).tolist()} have zero "
                              "variance and are centred but not rescaled")
                scale = np.where(flat, 1.0, scale)
            stats.append({"mean": mean, "scale": scale})
        return stats

    def standardized(self, stats) -> list:
        out = []
        for Y, m, st in zip(self.views, self.masks, stats):
            Z = (Y - st["mean"]) / st["scale"]
            if m is not None:
                Z[m] = 0.0
            out.append(Z)
        return out


@dataclass
class SyntheticSpec:
    """Configuration of a synthetic S-curve multi-view dataset."""

    N: int = 150
    kernels: list = field(default_factory=lambda: [KernelSpec.rbf(), KernelSpec.rbf()])
    noise_std: list = field(default_factory=lambda: [0.1, 0.1])
    dims: list = field(default_factory=lambda: [10, 10])
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not len(self.kernels) == len(self.noise_std) == len(self.dims):
            raise ValueError("kernels, noise_std and dims need one entry per view")
        if any(m < 1 for m in self.dims) or any(s < 0 for s in self.noise_std):
            raise ValueError("output dims must be >= 1 and noise std >= 0")


PRESETS = {"A": ("rbf", "rbf"), "B": ("rbf", "gibbs")}


def make_s_curve_latents(N: int, seed: int = 0, jitter: float = 0.01) -> np.ndarray:
    """Planar S-curve sampled at ``N`` uniform arc parameters.

    ``t ~ U[-3pi/2, 3pi/2]`` maps to ``(sin t, sign(t) (cos t - 1))``; each
    coordinate is divided by its standard deviation and Gaussian jitter of
    standard deviation ``jitter`` is added.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    rng = np.random.default_rng([seed, 11])
    t = rng.uniform(-1.5 * np.pi, 1.5 * np.pi, N)
    X = np.column_stack([np.sin(t), np.sign(t) * (np.cos(t) - 1.0)])
    X = X / X.std(axis=0)
    if jitter:
        X = X + jitter * rng.standard_normal(X.shape)
    return X


def _jittered_cholesky(K: np.ndarray) -> np.ndarray:
    jitter = 1e-8 * np.mean(np.diag(K))
    for _ in range(4):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    from .elbo import NumericalError
    raise NumericalError("Cholesky of the synthetic kernel matrix failed after 3 jitter escalations")


def sample_gp_views(X: np.ndarray, spec: SyntheticSpec, seed: int = 0) -> MultiViewDataset:
    """Draw ``y = f(X) + noise`` per view with ``f ~ GP(0, k_v)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != spec.N:
        raise ValueError(f"X has {X.shape[0]} rows, spec says N={spec.N}")
    views = []
    for v, (kern, noise, M) in enumerate(zip(spec.kernels, spec.noise_std, spec.dims)):
        rng = np.random.default_rng([seed, 13, v])
        chol = _jittered_cholesky(reference_gram(X, X, kern))
        F = chol @ rng.standard_normal((X.shape[0], M))
        views.append(F + noise * rng.standard_normal(F.shape))
    return MultiViewDataset(views)


def synthetic_dataset(preset: str = "A", N: int = 150, seed: int = 0, M: int = 10,
                      noise_std: float = 0.1):
    """Two-view S-curve dataset; preset ``A`` is RBF/RBF, ``B`` is RBF/Gibbs.

    Returns ``(dataset, X_true, spec)``.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected 'A' or 'B'")
    kernels = [KernelSpec.rbf() if k == "rbf" else KernelSpec.gibbs() for k in PRESETS[preset]]
    spec = SyntheticSpec(N=N, kernels=kernels, noise_std=[noise_std] * 2, dims=[M, M], seed=seed)
    X = make_s_curve_latents(N, seed)
    data = sample_gp_views(X, spec, seed)
    data.meta = {"preset": preset, "kernels": list(PRESETS[preset]), "noise_std": noise_std,
                 "M": M, "seed": seed}
    return data, X, spec


def make_missing_masks(dims, N: int, frac: float, seed: int = 0) -> list:
    """Random masks hiding ``frac`` of each view; every column keeps one observed row."""
    if not 0 <= frac < 1:
        raise ValueError("missing fraction must lie in [0, 1)")
    masks = []
    for v, M in enumerate(dims):
        rng = np.random.default_rng([seed, 17, v])
        m = rng.random((N, M)) < frac
        for j in range(M):
            if m[:, j].all():
                m[rng.integers(N), j] = False
        masks.append(m)
    return masks


def apply_masks(data: MultiViewDataset, masks) -> MultiViewDataset:
    return MultiViewDataset([Y.copy() for Y in data.views], data.labels, list(masks),
                            dict(data.meta))


def append_label_view(data: MultiViewDataset, labels=None) -> MultiViewDataset:
    """Add a one-hot view (columns in ascending class id) built from ``labels``."""
    labels = data.labels if labels is None else np.asarray(labels)
    if labels is None:
        raise ValueError("no labels supplied")
    labels = np.asarray(labels).astype(int)
    if labels.shape != (data.N,):
        raise ValueError(f"labels must have length {data.N}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("a label view needs at least two classes")
    onehot = (labels[:, None] == classes[None, :]).astype(float)
    return MultiViewDataset([Y.copy() for Y in data.views] + [onehot], labels,
                            list(data.masks) + [None], dict(data.meta))


# --------------------------------------------------------------------------
# CSV and manifest I/O


def _fmt(x: float) -> str:
    return repr(float(x))


def save_matrix_csv(path, Y, header=None, mask=None):
    """Write a numeric matrix with a header row; masked cells are left empty."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    header = header or [f"c{j}" for j in range(Y.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(Y):
            w.writerow(["" if mask is not None and mask[i, j] else _fmt(x)
                        for j, x in enumerate(row)])


def save_view_csv(path, Y, mask=None):
    save_matrix_csv(path, Y, [f"y{j}" for j in range(np.shape(Y)[1])], mask)


def read_matrix_csv(path):
    """Read a headered numeric CSV. Returns ``(values, missing_mask, header)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file (a header row is required)")
    header, body = rows[0], rows[1:]
    values = np.zeros((len(body), len(header)))
    mask = np.zeros(values.shape, bool)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 1} has {len(row)} fields, header has {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                mask[i, j] = True
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {j + 1} "
                    f"({header[j]!r})"
                ) from None
    return values, mask, header


def load_multiview_csv(paths, label_file=None, label_column=None) -> MultiViewDataset:
    """One CSV per view, rows aligned by position; empty cells become missing.

    When ``label_column`` is given, labels are read from ``label_file`` (default
    the first path). If that file is also a view, the column is removed from it.
    """
    paths = [os.fspath(p) for p in paths]
    loaded = [read_matrix_csv(p) for p in paths]
    counts = {p: v.shape[0] for p, (v, _, _) in zip(paths, loaded)}
    if len(set(counts.values())) > 1:
        raise ValueError(f"views disagree on row count: {counts}")
    labels = None
    if label_column is not None:
        label_file = os.fspath(label_file) if label_file is not None else paths[0]
        if label_file in paths:
            k = paths.index(label_file)
            vals, mask, header = loaded[k]
            if label_column not in header:
                raise ValueError(f"{label_file}: no column named {label_column!r}")
            j = header.index(label_column)
            if mask[:, j].any():
                raise ValueError(f"{label_file}: label column has empty cells")
            labels = vals[:, j]
            keep = [c for c in range(len(header)) if c != j]
            loaded[k] = (vals[:, keep], mask[:, keep], [header[c] for c in keep])
        else:
            vals, mask, header = read_matrix_csv(label_file)
            if label_column not in header:
                raise ValueError(f"{label_file}: no column named {label_column!r}")
            if vals.shape[0] != next(iter(counts.values())):
                raise ValueError(f"{label_file} has {vals.shape[0]} rows, views have "
                                 f"{next(iter(counts.values()))}")
            labels = vals[:, header.index(label_column)]
        if np.any(labels != np.round(labels)):
            raise ValueError("labels must be integers")
    return MultiViewDataset([v for v, _, _ in loaded], labels,
                            [m for _, m, _ in loaded])


def write_manifest(path, manifest: dict):
    manifest = dict(manifest)
    manifest["schema"] = DATA_SCHEMA
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path):
    """Read a dataset manifest. Returns ``(dataset, manifest)``.

    File paths inside the manifest are relative to the manifest's directory.
    """
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != DATA_SCHEMA:
        raise ValueError(f"{path}: expected schema {DATA_SCHEMA!r}, "
                         f"got {manifest.get('schema')!r}")
    base = os.path.dirname(os.path.abspath(path))
    views = manifest.get("views")
    if not views:
        raise ValueError(f"{path}: manifest lists no views")
    paths = [os.path.join(base, v["path"]) for v in views]
    lab = manifest.get("labels")
    data = load_multiview_csv(
        paths,
        label_file=os.path.join(base, lab["path"]) if lab else None,
        label_column=lab["column"] if lab else None,
    )
    if manifest.get("n") is not None and manifest["n"] != data.N:
        raise ValueError(f"{path}: manifest says n={manifest['n']}, files have {data.N} rows")
    for v, spec in enumerate(views):
        if spec.get("n_cols") is not None and spec["n_cols"] != data.dims[v]:
            raise ValueError(f"{path}: view {v} should have {spec['n_cols']} columns, "
                             f"file has {data.dims[v]}")
    data.meta = {k: manifest[k] for k in manifest if k not in ("views", "schema")}
    data.meta["base_dir"] = base
    return data, manifest
