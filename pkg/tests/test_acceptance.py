"""Exit criteria, each at its stated tolerance. A summary line per criterion is printed at the end of the run."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from conftest import ACCEPTANCE, run_cli
from test_clustering import planted_blobs, silhouette_oracle
from test_stats import oracle_spearman

from ambiance.aggregation import PROFILE_LENGTH, aggregate_place
from ambiance.ambiance_model import apply_relabel, default_relabel, trivial_arrangement
from ambiance.annotation import FaceAnnotation
from ambiance.clustering import K_CANDIDATES, kmeans, select_k, silhouette_samples
from ambiance.eigenfaces import EMOTIONS, classify_emotion, default_model, synthetic_emotion_corpus
from ambiance.face import region_brightness_saturation
from ambiance.imaging import ImageBuffer, Region, luminance, to_hsv
from ambiance.planted import null_corpus, planted_corpus, planted_pictures
from ambiance.prediction import fit_predict, loo_evaluate, select_features
from ambiance.registry import default_registry
from ambiance.stats import correlate_arrays, spearman
from ambiance.synthetic import circle_outlines, quadrants, rgb_noise, solid
from ambiance.visual import COLOR_NAMES, color_names, detect_circles, level_of_detail, symmetry

pytestmark = pytest.mark.acceptance

LABELS = default_registry().profile_labels()
PARTY = 8  # index of the high-noise dimension among the 18 targets


def record(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = (ok, detail)
    assert ok, detail


# 1 ---------------------------------------------------------------- profile length

def test_criterion_1_profile_has_129_entries():
    rng = np.random.default_rng(101)
    lengths = []
    for p in range(100):
        # random absence rates, including places with no face at all
        rate = float(rng.choice([0.0, 0.3, 0.47, 0.8, 1.0]))
        pics = planted_pictures(rng, 1, face_absent_rate=rate)[0]
        lengths.append(aggregate_place(pics, f"p{p}").flatten().shape[0])
    ok = PROFILE_LENGTH == 129 and set(lengths) == {129}
    record(1, ok, f"100 random places, lengths {sorted(set(lengths))}")


# 2 ---------------------------------------------------------------- error envelope

def envelope(seed: int, **kw) -> dict:
    noise = np.full(18, 0.03)
    noise[PARTY] = 0.12
    c = planted_corpus(seed, noise=noise, **kw)
    rep = loo_evaluate(c.X, c.Y, LABELS, c.targets[0].labels)
    dims = list(rep.dimensions.values())
    low = [d for i, d in enumerate(dims) if i != PARTY]
    out = {
        "max_mse_low": max(d.percent_mse for d in low),
        "max_rmse_low": max(d.percent_rmse for d in low),
        "party_mse": dims[PARTY].percent_mse,
        "party_rmse": dims[PARTY].percent_rmse,
    }
    # below 10 under either reading of the percentage error; the 10-15 band is only reachable as RMSE
    out["ok"] = out["max_mse_low"] < 10 and out["max_rmse_low"] < 10 and 10 <= out["party_rmse"] <= 15
    return out


def envelope_detail(runs: list[dict]) -> str:
    passed = sum(r["ok"] for r in runs)
    return (f"{passed}/10 seeds; low-noise max %MSE {max(r['max_mse_low'] for r in runs):.2f}, "
            f"max %RMSE {max(r['max_rmse_low'] for r in runs):.2f}; high-noise %RMSE "
            f"{min(r['party_rmse'] for r in runs):.1f}..{max(r['party_rmse'] for r in runs):.1f}")


def test_criterion_2_error_envelope():
    runs = [envelope(seed) for seed in range(10)]
    record(2, sum(r["ok"] for r in runs) >= 9, envelope_detail(runs))


# 3 ---------------------------------------------------------------- spearman oracle

def test_criterion_3_spearman_oracle():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(0, 31))
        x = rng.integers(0, 8, n).astype(float)
        y = rng.normal(size=n).round(int(rng.integers(0, 3)))
        x[rng.random(n) < 0.15] = np.nan
        y[rng.random(n) < 0.15] = np.nan
        expected, n_eff = oracle_spearman(x.tolist(), y.tolist())
        got = spearman(x, y)
        assert got.n_effective == n_eff
        if math.isnan(expected):
            assert math.isnan(got.rho)
        else:
            worst = max(worst, abs(got.rho - expected))
    inv = 0.0
    for _ in range(100):
        x, y = rng.normal(size=30), rng.normal(size=30)
        base = spearman(x, y).rho
        inv = max(inv, abs(spearman(x ** 3, y).rho - base), abs(spearman(x, np.exp(y)).rho - base))
    record(3, worst <= 1e-9 and inv <= 1e-12, f"max oracle gap {worst:.1e}, max invariance gap {inv:.1e}")


# 4 ---------------------------------------------------------------- silhouette and k selection

def test_criterion_4_silhouette_and_k_recovery():
    rng = np.random.default_rng(404)
    gap = 0.0
    for _ in range(40):
        n = int(rng.integers(3, 51))
        X = rng.normal(size=(n, 3))
        k = int(rng.integers(2, min(6, n) + 1))
        labels = kmeans(X, k, seed=int(rng.integers(1 << 30))).labels
        gap = max(gap, float(np.max(np.abs(silhouette_samples(X, labels) - silhouette_oracle(X, labels)))))
    recovered = {}
    for k in K_CANDIDATES:
        per = max(3, math.ceil(60 / k))
        recovered[k] = sum(select_k(planted_blobs(k, per, seed)[0], seed=seed).k == k for seed in range(10))
    ok = gap <= 1e-9 and all(v == 10 for v in recovered.values())
    record(4, ok, f"silhouette gap {gap:.1e}; recovered per k {recovered}")


# 5 ---------------------------------------------------------------- null calibration

N_NULL = 100


@pytest.fixture(scope="module")
def null_runs():
    counts, rhos = [], []
    names = [f"d{j}" for j in range(18)]
    for seed in range(N_NULL):
        X, Y = null_corpus(seed)
        counts.append(int((correlate_arrays(X, Y)[1] < 0.05).sum()))
        rep = loo_evaluate(X, Y, LABELS, names)
        rhos.append([d.accuracy_rho for d in rep.dimensions.values()])
    return np.array(counts), np.array(rhos)


def leaky_accuracy(seed: int) -> float:
    """Accuracy when features are screened once on all places, the leak the guard is meant to catch."""
    X, Y = null_corpus(seed)
    out = []
    for d in range(3):
        cols = select_features(X, Y[:, d])
        preds = [fit_predict(np.delete(X[:, cols], i, 0), np.delete(Y[:, d], i), X[i, cols]) for i in range(len(X))]
        out.append(spearman(preds, Y[:, d]).rho)
    return float(np.mean(out))


def test_criterion_5_null_guards(null_runs):
    counts, rhos = null_runs
    in_band = float(np.mean(np.abs(counts - 116) <= 30))
    leaky = float(np.mean([leaky_accuracy(s) for s in range(10)]))
    assert abs(counts.mean() - 116) <= 30 and in_band >= 0.95
    # screening inside each fold shows no optimism; screening on all places does
    assert rhos.mean() <= 0.05
    assert leaky >= 0.3 > rhos.mean() + 0.2


@pytest.mark.xfail(strict=True, reason=(
    "leave-one-out accuracy under the null spreads with sd near 0.30, not the 0.14 of independent pairs, "
    "so |rho| < 0.3 holds for about 65% of dimension-runs; see the decisions ledger"))
def test_criterion_5_literal(null_runs):
    counts, rhos = null_runs
    frac = np.mean(np.abs(rhos) < 0.3, axis=0)
    in_band = float(np.mean(np.abs(counts - 116) <= 30))
    detail = (f"p<0.05 cells mean {counts.mean():.1f} ({in_band:.0%} of runs in 116 +/- 30); "
              f"|accuracy_rho| < 0.3 in {frac.min():.0%}..{frac.max():.0%} of runs per dimension "
              f"(mean rho {rhos.mean():+.3f}, sd {rhos.std():.3f})")
    ok = abs(counts.mean() - 116) <= 30 and bool((frac >= 0.95).all())
    record(5, ok, detail)


# 6 ---------------------------------------------------------------- extractor ground truth

def test_criterion_6_extractor_ground_truth():
    img = rgb_noise(31, 17, seed=6)
    mirrored = ImageBuffer(np.concatenate([img.pixels, img.pixels[:, ::-1]], axis=1))
    sym = symmetry(mirrored)
    gray = solid(64, 64, (128, 128, 128))
    ann = FaceAnnotation(True, Region(16, 16, 48, 48),
                         {"left_eye": (26, 26), "right_eye": (38, 26), "nose": (32, 32), "mouth": (32, 40)},
                         0.5, 30.0, "female", 0.9, (0.3, 0.3, 0.4), "none", 0.0).validate()
    face_b = region_brightness_saturation(gray, ann)["brightness_face"]
    value = to_hsv((128, 128, 128)).value
    circles = detect_circles(circle_outlines(128, 128, ((30, 30, 10), (85, 35, 15), (55, 90, 20))))
    lod = level_of_detail(quadrants(32, 32, ((255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0))))[0]
    primaries = {"red": (255, 0, 0), "green": (0, 255, 0), "blue": (0, 0, 255)}
    mass = {n: dict(zip(COLOR_NAMES, color_names(solid(8, 8, c))))[n] for n, c in primaries.items()}
    ok = (sym == 1.0 and abs(face_b - 0.502) <= 0.002 and abs(value - 0.502) <= 0.002
          and abs(luminance((128, 128, 128)) - 0.502) <= 0.002 and circles == 3 and lod == 4
          and min(mass.values()) >= 0.99)
    record(6, ok, f"symmetry {sym}, gray brightness {face_b:.4f}, circles {circles}, detail {lod}, "
                  f"primary mass {min(mass.values()):.3f}")


# 7 ---------------------------------------------------------------- eigenfaces

def test_criterion_7_eigenfaces():
    model = default_model()

    def accuracy(corpus):
        probs = [classify_emotion(c, model) for c, _ in corpus]
        hits = [EMOTIONS[int(np.argmax(p))] == label for p, (_, label) in zip(probs, corpus)]
        return float(np.mean(hits)), max(abs(float(p.sum()) - 1.0) for p in probs)

    train, dev_train = accuracy(synthetic_emotion_corpus(per_class=30, seed=2024))
    held, dev_held = accuracy(synthetic_emotion_corpus(per_class=30, seed=7))
    ok = train >= 0.9 and held >= 0.8 and max(dev_train, dev_held) <= 1e-6
    record(7, ok, f"train {train:.3f}, held-out {held:.3f}, max |sum-1| {max(dev_train, dev_held):.1e}")


# 8 ---------------------------------------------------------------- cluster table

def test_criterion_8_cluster_table():
    from test_ambiance_model import TABLE, random_arrangement

    mismatches = []
    for arr0 in [trivial_arrangement()] + [random_arrangement(s) for s in range(10)]:
        arr = apply_relabel(arr0, default_relabel())
        if list(arr.clusters) != [row[0] for row in TABLE]:
            mismatches.append("cluster names")
        for name, target, others in TABLE:
            members = {d for d, c in arr.assignment.items() if c == name}
            expected = {target, *(m.strip() for m in others.split(",") if m.strip())}
            if arr.target_terms[name] != target or members != expected:
                mismatches.append(name)
    record(8, not mismatches and len(TABLE) == 18, f"18 clusters over 11 starting arrangements, "
                                                   f"{len(mismatches)} mismatches")


# 9 ---------------------------------------------------------------- determinism

def snapshot(out) -> dict[str, bytes]:
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
            if p.is_file() and p.suffix in (".csv", ".json", ".jsonl", ".md", ".svg")
            and "cache" not in p.relative_to(out).parts}


def test_criterion_9_determinism(demo_run, tmp_path):
    data, first = demo_run
    second = tmp_path / "out"
    res = run_cli("pipeline", data, "--out", second, "--workers", "2")
    assert res.exit_code == 0, res.output
    a, b = snapshot(first), snapshot(second)
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    record(9, bool(a) and not differing, f"{len(a)} files compared across workers 1 and 2, differing {differing}")


# 10 ---------------------------------------------------------------- missing data

def test_criterion_10_missing_data(demo_run):
    data, out = demo_run
    anns = [json.loads(line) for line in (data / "annotations.jsonl").read_text().splitlines()[1:]]
    absent = float(np.mean([not a["detected"] for a in anns]))
    reg = default_registry()
    rows = (out / "correlations" / "on_the_spot_n.csv").read_text().splitlines()[1:]
    n = {r.split(",")[0]: min(int(v) for v in r.split(",")[1:]) for r in rows}
    face_rows = [f"mean:{reg.names[i]}" for i in range(len(reg)) if reg.face_dependent_mask[i]]
    other_rows = [f"mean:{reg.names[i]}" for i in range(len(reg)) if not reg.face_dependent_mask[i]]
    reduced = all(n[r] < 12 for r in face_rows) and all(n[r] == 12 for r in other_rows)
    lengths = {len(line.split(",")) for line in (out / "profiles" / "profiles.csv").read_text().splitlines()}

    planted_ok, runs = True, []
    for seed in range(10):
        c = planted_corpus(seed, face_absent_rate=0.47, faceless_places=6)
        planted_ok &= all(p.flatten().shape == (129,) for p in c.profiles)
        n_face = correlate_arrays(c.X, c.Y)[2][LABELS.index("mean:smile")]
        planted_ok &= bool((n_face == 43).all())
        runs.append(envelope(seed, face_absent_rate=0.47, faceless_places=6))
    crit2 = sum(r["ok"] for r in runs) >= 9
    ok = abs(absent - 0.47) <= 0.08 and reduced and lengths == {130} and planted_ok and crit2
    face_n = [n[r] for r in face_rows]
    record(10, ok, f"demo face-absent {absent:.0%}, face rows n {min(face_n)}..{max(face_n)} of 12; "
                   f"criterion 2 under 47% absence: {envelope_detail(runs)}")
