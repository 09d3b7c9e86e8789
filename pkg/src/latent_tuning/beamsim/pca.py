"""Principal-component histograms for spotting input distribution shift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ImageGrid, ShapeError


@dataclass
class PcaShiftReport:
    components: np.ndarray  # (n_components, n_pixels), rows are unit loadings
    eigenvalues: np.ndarray
    mean: np.ndarray
    train_scores: np.ndarray  # (n_train, n_components)
    test_scores: np.ndarray
    edges: list[np.ndarray]
    train_hist: list[np.ndarray]  # bin probabilities
    test_hist: list[np.ndarray]
    overlap: np.ndarray  # per component, in [0, 1]


def _flatten(images) -> np.ndarray:
    arrs = [g.pixels if isinstance(g, ImageGrid) else np.asarray(g, dtype=float) for g in images]
    shapes = {a.shape for a in arrs}
    if len(shapes) != 1:
        raise ShapeError(f"images have mixed shapes {sorted(shapes)}")
    return np.stack(arrs).reshape(len(arrs), -1)


def fit_pca(X: np.ndarray, n_components: int):
    """Leading principal axes of the rows of ``X`` by covariance eigendecomposition.

    Axes come in descending eigenvalue order; each is signed so its
    largest-magnitude loading is positive.
    """
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (len(X) - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:n_components]
    vals, vecs = vals[order], vecs[:, order].T
    flip = np.sign(vecs[np.arange(len(vecs)), np.argmax(np.abs(vecs), axis=1)])
    return vecs * flip[:, None], vals, mean


def overlap_coefficient(p: np.ndarray, q: np.ndarray) -> float:
    """Histogram intersection of two bin-probability vectors."""
    return float(np.minimum(p, q).sum())


def pca_shift_report(train_images, test_images, n_components: int = 15,
                     bins: int = 30) -> PcaShiftReport:
    Xtr = _flatten(train_images)
    Xte = _flatten(test_images)
    if len(Xtr) < 2 or len(Xte) < 2:
        raise ValueError("need at least 2 images in each set")
    if Xtr.shape[1] != Xte.shape[1]:
        raise ShapeError(f"train and test image sizes differ: {Xtr.shape[1]} vs {Xte.shape[1]}")
    if n_components > min(len(Xtr), Xtr.shape[1]):
        raise ValueError(
            f"cannot extract {n_components} components from {len(Xtr)} images of {Xtr.shape[1]} pixels"
        )
    comps, vals, mean = fit_pca(Xtr, n_components)
    s_tr = (Xtr - mean) @ comps.T
    s_te = (Xte - mean) @ comps.T
    edges, htr, hte, ov = [], [], [], []
    for c in range(n_components):
        lo = min(s_tr[:, c].min(), s_te[:, c].min())
        hi = max(s_tr[:, c].max(), s_te[:, c].max())
        if hi <= lo:
            hi = lo + 1.0
        e = np.linspace(lo, hi, bins + 1)
        a = np.histogram(s_tr[:, c], e)[0] / len(s_tr)
        b = np.histogram(s_te[:, c], e)[0] / len(s_te)
        edges.append(e)
        htr.append(a)
        hte.append(b)
        ov.append(overlap_coefficient(a, b))
    return PcaShiftReport(comps, vals, mean, s_tr, s_te, edges, htr, hte, np.array(ov))
