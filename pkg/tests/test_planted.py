from __future__ import annotations

import numpy as np
import pytest

from ambiance.planted import PLANTED_FEATURES, absence_rates, null_corpus, planted_corpus


def test_absence_rates_keep_overall_rate(rng):
    rates = absence_rates(rng, 49, 0.47, faceless_places=6)
    assert (rates == 1.0).sum() == 6
    assert rates.mean() == pytest.approx(0.47)
    assert (absence_rates(rng, 10, 0.3) == 0.3).all()
    with pytest.raises(ValueError):
        absence_rates(rng, 10, 0.2, faceless_places=3)


def test_planted_corpus_is_seeded():
    a, b = planted_corpus(11), planted_corpus(11)
    assert np.array_equal(a.X, b.X, equal_nan=True) and np.array_equal(a.Y, b.Y)
    assert not np.array_equal(a.Y, planted_corpus(12).Y)


def test_planted_signal_is_recoverable():
    from ambiance.prediction import select_features
    from ambiance.registry import default_registry

    c = planted_corpus(0, noise=0.01)
    labels = default_registry().profile_labels()
    picked = {labels[i] for i in select_features(c.X, c.Y[:, 0])}
    assert len(picked & set(PLANTED_FEATURES)) >= 3
    assert ((c.Y >= 0) & (c.Y <= 1)).all()


def test_faceless_places_lose_face_entries():
    from ambiance.registry import default_registry

    c = planted_corpus(1, face_absent_rate=0.47, faceless_places=6)
    labels = default_registry().profile_labels()
    X = c.X
    smile = X[:, labels.index("mean:smile")]
    assert np.isnan(smile).sum() == 6
    assert not np.isnan(X[:, labels.index("mean:contrast")]).any()
    assert (X[np.isnan(smile), labels.index("face_count")] == 0).all()


def test_null_corpus_shapes():
    X, Y = null_corpus(0)
    assert X.shape == (49, 129) and Y.shape == (49, 18)
