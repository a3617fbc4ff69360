"""Frequency-domain texture descriptors and the image-domain metric model.

An image's frequency feature is its 2D DFT magnitude normalized by the peak
magnitude, so values live in [0, 1] with the DC term included. The histogram
descriptor summarizes that matrix with per-bin masked means, and the metric
model clusters descriptors of a reference image corpus so any new image can
be scored by its distance to the nearest cluster center.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .errors import FitError, MalformedFileError, ParameterError

MODEL_FORMAT_VERSION = 1


def frequency_feature(image: np.ndarray) -> np.ndarray:
    """Peak-normalized DFT magnitude of a 2D gray image.

    Returns an array of the image's shape with values in [0, 1]. An all-zero
    image (peak magnitude 0) maps to all zeros.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ParameterError(f"image must be a non-empty 2D array, got {img.shape}")
    if not np.isfinite(img).all():
        raise ParameterError("image values must be finite")
    mag = np.abs(np.fft.fft2(img))
    peak = mag.max()
    if peak == 0.0:
        return np.zeros_like(mag)
    return mag / peak


def default_bin_edges(bins: int = 16) -> np.ndarray:
    """Evenly spaced edges over [0, 1]; the last edge is nudged above 1 so a
    value of exactly 1.0 falls in the final half-open bin."""
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    edges = np.linspace(0.0, 1.0, bins + 1)
    edges[-1] = np.nextafter(1.0, 2.0)
    return edges


def histogram_descriptor(feature: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Masked-mean histogram of a frequency feature.

    Component k is the mean over ALL matrix elements of value * 1[value in
    [edges[k], edges[k+1])], i.e. out-of-bin elements contribute zeros to the
    mean rather than being dropped. Bins are half-open and must be strictly
    increasing and cover [0, 1].
    """
    feat = np.asarray(feature, dtype=np.float64)
    if feat.size == 0:
        raise ParameterError("feature must be non-empty")
    e = np.asarray(edges, dtype=np.float64)
    if e.ndim != 1 or len(e) < 2:
        raise ParameterError("edges must be a 1D array of at least 2 values")
    if not np.all(np.diff(e) > 0):
        raise ParameterError("edges must be strictly increasing")
    if e[0] > 0.0 or e[-1] < 1.0:
        raise ParameterError("edges must cover [0, 1]")
    flat = feat.reshape(-1)
    out = np.empty(len(e) - 1)
    for k in range(len(e) - 1):
        mask = (flat >= e[k]) & (flat < e[k + 1])
        out[k] = flat[mask].sum() / flat.size
    return out


# ---------------------------------------------------------------------------
# Lloyd k-means (kept local: determinism under a seed and a monotone
# objective are contracts here, not implementation details)


def kmeans(
    data: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Plain Lloyd iterations with kmeans++-style seeding.

    Returns (centers, labels, objective_history); the history of summed
    squared distances is non-increasing.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ParameterError("data must be a non-empty 2D array")
    if not 1 <= k <= len(x):
        raise ParameterError(f"k must be in [1, {len(x)}]")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(x, k, rng)
    history: list[float] = []
    labels = np.zeros(len(x), dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        obj = float(d2[np.arange(len(x)), labels].sum())
        history.append(obj)
        new_centers = centers.copy()
        for j in range(k):
            members = x[labels == j]
            if len(members):
                new_centers[j] = members.mean(axis=0)
            else:
                # Re-seat an empty center on the point farthest from its own
                # center; deterministic and keeps the objective from rising.
                far = int(np.argmax(d2[np.arange(len(x)), labels]))
                new_centers[j] = x[far]
        shift = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if shift <= tol:
            break
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    history.append(float(d2[np.arange(len(x)), labels].sum()))
    return centers, labels, history


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(len(x))]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = x[rng.integers(len(x), size=k - j)]
            break
        probs = d2 / total
        centers[j] = x[rng.choice(len(x), p=probs)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


# ---------------------------------------------------------------------------
# Metric model


class MetricModel:
    """Cluster centers over corpus descriptors, with the bin edges that
    produced them and a fingerprint of the corpus it was fitted on."""

    def __init__(self, edges: np.ndarray, centers: np.ndarray, fingerprint: str = ""):
        self.edges = np.asarray(edges, dtype=np.float64)
        self.centers = np.asarray(centers, dtype=np.float64)
        if self.centers.ndim != 2:
            raise ParameterError("centers must be 2D")
        if self.centers.shape[1] != len(self.edges) - 1:
            raise ParameterError("center dimension must match bin count")
        self.fingerprint = fingerprint

    def describe(self, image: np.ndarray) -> np.ndarray:
        return histogram_descriptor(frequency_feature(image), self.edges)

    def distance(self, image: np.ndarray) -> float:
        """L2 distance from the image's descriptor to the nearest center."""
        gamma = self.describe(image)
        return float(np.linalg.norm(self.centers - gamma, axis=1).min())

    def save(self, path: str) -> None:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "edges": self.edges.tolist(),
            "centers": self.centers.tolist(),
            "fingerprint": self.fingerprint,
        }
        from .fileio import atomic_write_text

        atomic_write_text(path, json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: str) -> "MetricModel":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as err:
                raise MalformedFileError(f"{path}: {err}") from None
        version = doc.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise MalformedFileError(
                f"{path}: unsupported format_version {version!r}"
            )
        return cls(
            np.array(doc["edges"]),
            np.array(doc["centers"]),
            doc.get("fingerprint", ""),
        )


def fit_metric_model(
    images: list[np.ndarray],
    bins: int = 16,
    clusters: int = 64,
    seed: int = 0,
    edges: np.ndarray | None = None,
    fingerprint: str = "",
) -> MetricModel:
    """Fit cluster centers over the corpus images' descriptors."""
    if len(images) < clusters:
        raise FitError(
            f"corpus holds {len(images)} usable images but {clusters} clusters "
            "were requested"
        )
    if edges is None:
        edges = default_bin_edges(bins)
    descs = np.stack(
        [histogram_descriptor(frequency_feature(img), edges) for img in images]
    )
    centers, _, _ = kmeans(descs, clusters, seed=seed)
    if not fingerprint:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(descs).tobytes())
        fingerprint = h.hexdigest()[:16]
    return MetricModel(edges, centers, fingerprint)


def load_corpus_images(
    directory: str, crop: tuple[int, int] | None = None
) -> list[np.ndarray]:
    """Read every raster image under a directory as gray float in [0, 1].

    crop = (width, height) center-crops larger images and skips smaller ones
    so every descriptor sees the same raster size as the renderer produces.
    """
    from PIL import Image

    out = []
    names = sorted(
        n
        for n in os.listdir(directory)
        if n.lower().endswith((".png", ".jpg", ".jpeg", ".bmp"))
    )
    for name in names:
        with Image.open(os.path.join(directory, name)) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        if crop is not None:
            w, h = crop
            if arr.shape[1] < w or arr.shape[0] < h:
                continue
            y0 = (arr.shape[0] - h) // 2
            x0 = (arr.shape[1] - w) // 2
            arr = arr[y0 : y0 + h, x0 : x0 + w]
        out.append(arr)
    return out
