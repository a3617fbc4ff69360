"""Frequency features, histogram descriptors, k-means, and the metric model."""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from lidarpreseg import descriptors
from lidarpreseg.errors import FitError, ParameterError

from oracles import dft_magnitude_direct, histogram_masked_mean


# ---------------------------------------------------------------------------
# Frequency feature


def test_frequency_feature_matches_direct_dft():
    rng = np.random.default_rng(2)
    start = time.monotonic()
    for _ in range(5):
        img = rng.random((8, 8))
        got = descriptors.frequency_feature(img)
        want = dft_magnitude_direct(img)
        assert np.abs(got - want).max() <= 1e-6
    assert time.monotonic() - start < 1.0


def test_frequency_feature_rectangular_and_zero():
    rng = np.random.default_rng(3)
    img = rng.random((6, 10))
    got = descriptors.frequency_feature(img)
    want = dft_magnitude_direct(img)
    assert got.shape == (6, 10)
    assert np.abs(got - want).max() <= 1e-6
    assert descriptors.frequency_feature(np.zeros((4, 4))).max() == 0.0


def test_frequency_feature_peak_normalized():
    rng = np.random.default_rng(4)
    img = rng.random((16, 16))
    feat = descriptors.frequency_feature(img)
    assert feat.max() == pytest.approx(1.0)
    assert feat.min() >= 0.0
    # the DC bin dominates a non-negative image
    assert feat[0, 0] == pytest.approx(1.0)


def test_frequency_feature_validation():
    with pytest.raises(ParameterError):
        descriptors.frequency_feature(np.zeros((2, 2, 2)))
    with pytest.raises(ParameterError):
        descriptors.frequency_feature(np.array([[np.inf, 0.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# Histogram descriptor


def test_histogram_descriptor_hand_fixture():
    # feature [[1, 0], [0, 0]] with edges {0, 0.5, then just above 1}: bin 0
    # collects three zeros (sum 0), bin 1 collects the single 1.0; dividing
    # by all four elements gives (0, 0.25), computed by hand
    feature = np.array([[1.0, 0.0], [0.0, 0.0]])
    edges = np.array([0.0, 0.5, np.nextafter(1.0, 2.0)])
    got = descriptors.histogram_descriptor(feature, edges)
    assert got == pytest.approx([0.0, 0.25], abs=1e-12)


def test_histogram_descriptor_constant_fixture():
    # all elements 0.6 fall in the upper bin: mean contribution 0.6
    feature = np.full((3, 3), 0.6)
    edges = np.array([0.0, 0.5, np.nextafter(1.0, 2.0)])
    got = descriptors.histogram_descriptor(feature, edges)
    assert got == pytest.approx([0.0, 0.6], abs=1e-12)


def test_histogram_descriptor_matches_loop_oracle():
    rng = np.random.default_rng(5)
    edges = descriptors.default_bin_edges(16)
    for _ in range(10):
        feature = rng.random((9, 7))
        got = descriptors.histogram_descriptor(feature, edges)
        want = histogram_masked_mean(feature, edges)
        assert np.allclose(got, want, atol=1e-12)


def test_default_bin_edges_cover_one():
    edges = descriptors.default_bin_edges(16)
    assert len(edges) == 17
    assert edges[0] == 0.0
    assert edges[-1] > 1.0  # exact 1.0 falls inside the last half-open bin
    feature = np.ones((2, 2))
    got = descriptors.histogram_descriptor(feature, edges)
    assert got[-1] == pytest.approx(1.0)


def test_histogram_descriptor_validation():
    with pytest.raises(ParameterError):
        descriptors.histogram_descriptor(np.ones((2, 2)), np.array([0.0, 0.5]))
    with pytest.raises(ParameterError):
        descriptors.histogram_descriptor(np.ones((2, 2)), np.array([0.0, 0.0, 1.1]))


# ---------------------------------------------------------------------------
# k-means


def test_kmeans_objective_monotone_and_deterministic():
    rng = np.random.default_rng(6)
    data = np.concatenate(
        [rng.normal(c, 0.3, size=(40, 4)) for c in (0.0, 3.0, 6.0)]
    )
    c1, l1, hist1 = descriptors.kmeans(data, 3, seed=42)
    c2, l2, hist2 = descriptors.kmeans(data, 3, seed=42)
    assert np.array_equal(c1, c2) and np.array_equal(l1, l2)
    assert hist1 == hist2
    diffs = np.diff(hist1)
    assert (diffs <= 1e-9).all()


def test_kmeans_recovers_separated_clusters():
    rng = np.random.default_rng(7)
    truth = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    data = np.concatenate([rng.normal(c, 0.2, size=(30, 2)) for c in truth])
    centers, labels, _ = descriptors.kmeans(data, 3, seed=0)
    # every true center has exactly one fitted center nearby
    d = np.linalg.norm(truth[:, None, :] - centers[None, :, :], axis=2)
    assert (d.min(axis=1) < 0.2).all()
    assert len(set(d.argmin(axis=1))) == 3
    # each true blob maps to a single label
    for blob in range(3):
        assert len(np.unique(labels[30 * blob : 30 * (blob + 1)])) == 1


def test_kmeans_labels_are_nearest_center():
    rng = np.random.default_rng(8)
    data = rng.random((80, 3))
    centers, labels, _ = descriptors.kmeans(data, 5, seed=1)
    d = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(labels, d.argmin(axis=1))


def test_kmeans_validation():
    with pytest.raises(ParameterError):
        descriptors.kmeans(np.empty((0, 2)), 2)
    with pytest.raises(ParameterError):
        descriptors.kmeans(np.ones((3, 2)), 0)


# ---------------------------------------------------------------------------
# Metric model


def _tiny_corpus(rng, n=8, side=24):
    # sinusoidal gratings of varying frequency: structured, distinct spectra
    images = []
    for k in range(n):
        x = np.arange(side) / side
        img = 0.5 + 0.5 * np.sin(2 * np.pi * (k + 1) * x)[None, :] * np.ones((side, 1))
        images.append(img + 0.01 * rng.random((side, side)))
    return images


def test_fit_metric_model_and_distance():
    rng = np.random.default_rng(9)
    images = _tiny_corpus(rng)
    model = descriptors.fit_metric_model(images, bins=8, clusters=4, seed=0)
    assert model.centers.shape == (4, 8)
    # a corpus member scores closer than an unstructured noise image
    member = model.distance(images[0])
    noise = model.distance(rng.random((24, 24)))
    assert member < noise
    assert model.distance(images[0]) >= 0.0


def test_fit_metric_model_requires_enough_images():
    rng = np.random.default_rng(10)
    with pytest.raises(FitError):
        descriptors.fit_metric_model(_tiny_corpus(rng, n=3), clusters=4)


def test_metric_model_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    model = descriptors.fit_metric_model(
        _tiny_corpus(rng), bins=8, clusters=4, seed=3, fingerprint="abc123"
    )
    path = str(tmp_path / "model.json")
    model.save(path)
    with open(path) as fh:
        doc = json.load(fh)
    assert doc["format_version"] == 1
    assert doc["fingerprint"] == "abc123"
    loaded = descriptors.MetricModel.load(path)
    assert np.array_equal(loaded.centers, model.centers)
    assert np.array_equal(loaded.edges, model.edges)
    img = rng.random((24, 24))
    assert loaded.distance(img) == pytest.approx(model.distance(img))


def test_metric_model_distance_is_min_center_distance():
    rng = np.random.default_rng(12)
    model = descriptors.fit_metric_model(_tiny_corpus(rng), bins=8, clusters=4, seed=0)
    img = rng.random((24, 24))
    desc = model.describe(img)
    want = np.linalg.norm(model.centers - desc, axis=1).min()
    assert model.distance(img) == pytest.approx(want)


def test_load_corpus_images(tmp_path):
    from PIL import Image

    rng = np.random.default_rng(13)
    for i in range(3):
        arr = (rng.random((30, 40, 3)) * 255).astype(np.uint8)
        Image.fromarray(arr).save(tmp_path / f"img{i}.png")
    images = descriptors.load_corpus_images(str(tmp_path))
    assert len(images) == 3
    assert images[0].ndim == 2  # gray
    assert 0.0 <= images[0].min() and images[0].max() <= 1.0
    cropped = descriptors.load_corpus_images(str(tmp_path), crop=(20, 16))
    assert cropped[0].shape == (16, 20)
