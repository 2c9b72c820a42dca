import os
import random

import pytest

import hayama

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "tests", "fixtures")


def test_harvest_and_scan_anubi():
    cat = hayama.Catalog.harvest([os.path.join(FIXTURES, "anubi")])
    assert len(cat) == 20
    entries = cat.entries
    assert all(e["kind"] == "text" for e in entries)
    target = next(i for i, e in enumerate(entries) if e["pattern"] == b"DisableAntiSpyware")
    auto = hayama.Automaton(cat)
    assert auto.scan(b"xx DisableAntiSpyware xx") == [target]
    assert auto.scan(b"nothing here") == []
    assert len(auto.feature_ids) == 20


def test_catalog_round_trip(tmp_path):
    cat = hayama.Catalog.harvest([os.path.join(FIXTURES, "anubi")])
    p = tmp_path / "cat.jsonl"
    p.write_text(cat.dumps())
    assert hayama.Catalog.load(str(p)) == cat


def test_roc_perfect_and_reversed():
    r = hayama.roc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert r["auc"] == 1.0
    assert r["partial_auc"] == 1.0
    assert r["fpr"][0] == 0.0 and r["tpr"][-1] == 1.0
    assert hayama.roc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])["auc"] == 0.0


def test_roc_rejects_single_class():
    with pytest.raises(hayama._hayama.Error):
        hayama.roc([0.1, 0.2], [1, 1])


def test_pls_copy_block():
    rng = random.Random(3)
    cols = [[float(rng.random() < 0.3) for _ in range(200)] for _ in range(3)]
    assert abs(hayama.pls_max_correlation(cols, cols) - 1.0) < 1e-9


def test_lasso_select_prefers_the_signal_column():
    rng = random.Random(5)
    rows, labels = [], []
    for _ in range(400):
        y = rng.random() < 0.5
        r = [c for c in range(1, 6) if rng.random() < 0.2]
        if rng.random() < (0.7 if y else 0.1):
            r.append(0)
        rows.append(r)
        labels.append(int(y))
    (top,) = hayama.lasso_select(rows, 6, labels, [1])
    assert top == [0]


def test_synthetic_pipeline(tmp_path):
    c = hayama.generate_synthetic(str(tmp_path / "corpus"), seed=2, n_benign=80, n_malware=80, n_patterns=60)
    settings = {
        "rules_dir": str(c["rules_dir"]),
        "manifest": str(c["manifest"]),
        "side_features": str(c["side_features"]),
        "workdir": str(tmp_path / "work"),
        "target_k": "5,10",
        "n_trees": "20",
    }
    r = hayama.run_pipeline(settings=settings)
    series = {row["series"] for row in r["curve"]}
    assert series == {"baseline", "combined:gbdt", "yara_only:gbdt"}
    assert all(0.0 <= row["accuracy"] <= 1.0 for row in r["curve"])
    assert (tmp_path / "work" / "report_conditional.json").exists()
