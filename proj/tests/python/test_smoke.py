"""Smoke tests for the python module: statistics helpers, the state engine,
and a miniature generate -> train -> evaluate -> predict loop.

Runnable directly (python3 test_smoke.py) or via pytest.
"""

import math
import tempfile
from pathlib import Path

import mototp


def test_wilson_worked_example():
    lo, hi = mototp.wilson_ci(7277 / 7983, 7983)
    assert round(lo, 3) == 0.905
    assert round(hi, 3) == 0.918
    lo, hi = mototp.wilson_ci(7277 / 8602, 8602)
    assert round(lo, 3) == 0.838
    assert round(hi, 3) == 0.853


def test_class_metrics_from_counts():
    m = mototp.class_metrics_from_counts(7277, 706, 1325)
    assert round(m["precision"], 3) == 0.912
    assert round(m["recall"], 3) == 0.846
    assert abs(m["f1"] - 0.878) < 1e-3


def test_roc_auc():
    assert mototp.roc_auc([0.1, 0.4, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert mototp.roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0


def test_classify_state_phases():
    assert mototp.classify_state(0.85, 0.10, 0.05)["phase"] == 1
    assert mototp.classify_state(0.05, 0.15, 0.80)["phase"] == 5
    fallback = mototp.classify_state(0.40, 0.35, 0.25)
    assert fallback["phase"] == 0
    assert fallback["argmax"] == "NTP"


def test_schema():
    names = mototp.schema_feature_names()
    assert len(names) == 63
    assert "speed" in names
    assert mototp.schema_hash() != 0


def test_complexity():
    c = mototp.complexity(64)
    assert c["parameters"] == 172043
    assert abs(c["parameters"] - 172235) / 172235 < 0.01
    assert c["flops"] > 0


def test_end_to_end_miniature():
    with tempfile.TemporaryDirectory(prefix="mototp_smoke") as tmp:
        corpus = Path(tmp) / "corpus"
        sessions = mototp.generate_corpus(corpus, rides_per_class=6, duration=300, seed=5)
        assert sessions == 18

        report = mototp.validate_corpus_dir(corpus)
        assert "mean speed" in report["text"]

        model_dir = Path(tmp) / "model"
        summary = mototp.train_model(
            corpus,
            model_dir,
            seed=3,
            max_epochs=2,
            window_length=32,
            window_stride=32,
            batch_size=16,
            threads=2,
            variant="conv_only",
        )
        assert Path(summary["checkpoint"]).exists()
        assert math.isfinite(summary["best_val_loss"])

        metrics = mototp.evaluate_checkpoint(summary["checkpoint"], corpus, threads=2)
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert metrics["windows"] > 0

        probs = mototp.predict_window(
            summary["checkpoint"], [[0.0] * 63 for _ in range(32)]
        )
        total = probs["p_ntp"] + probs["p_ltp"] + probs["p_htp"]
        assert abs(total - 1.0) < 1e-9


if __name__ == "__main__":
    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
                print(f"PASS {name}")
            except AssertionError as exc:
                failures += 1
                print(f"FAIL {name}: {exc}")
    raise SystemExit(1 if failures else 0)
