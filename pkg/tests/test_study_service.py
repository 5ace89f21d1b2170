"""Scripted-client exercise of the pairwise study service."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from medsr.study import (
    VoteLog,
    VoteRecord,
    aggregate_report,
    create_app,
    format_report,
    side_assignment,
    session_pair_ids,
    write_study_manifest,
    write_study_pair,
)

METHOD_NAMES = ("cnn", "lanczos")


@pytest.fixture(scope="module")
def study_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("study")
    rng = np.random.default_rng(0)
    for factor, n_pairs in ((2, 120), (4, 6)):
        for i in range(n_pairs):
            base = rng.random((8, 8))
            write_study_pair(
                root, factor, f"pair_{i:04d}",
                original=base,
                method_a=np.clip(base + 0.05, 0, 1),
                method_b=np.clip(base - 0.05, 0, 1),
            )
    write_study_manifest(root, method_a="cnn", method_b="lanczos")
    return root


@pytest.fixture()
def client(study_dir, tmp_path):
    app = create_app(study_dir, study_seed=7, votes_path=tmp_path / "votes.jsonl")
    return TestClient(app)


class TestSession:
    def test_exactly_100_pairs_when_pool_allows(self, client):
        body = client.get("/api/session", params={"annotator": "doc1", "factor": 2}).json()
        assert len(body["pairs"]) == 100
        assert body["factor"] == 2

    def test_short_pool_logged_and_shorter(self, client, caplog):
        import logging

        with caplog.at_level(logging.WARNING, logger="medsr.study"):
            body = client.get("/api/session", params={"annotator": "doc1", "factor": 4}).json()
        assert len(body["pairs"]) == 6
        assert any("only 6 pairs" in r.getMessage() for r in caplog.records)

    def test_no_method_names_in_session(self, client):
        resp = client.get("/api/session", params={"annotator": "doc1", "factor": 2})
        text = resp.text.lower()
        for name in METHOD_NAMES:
            assert name not in text
        assert "method_a" not in text and "method_b" not in text

    def test_deterministic_across_reloads(self, client):
        a = client.get("/api/session", params={"annotator": "doc2", "factor": 2}).json()
        b = client.get("/api/session", params={"annotator": "doc2", "factor": 2}).json()
        assert [p["pair_id"] for p in a["pairs"]] == [p["pair_id"] for p in b["pairs"]]

    def test_different_annotators_get_different_orders(self, study_dir):
        a = session_pair_ids(study_dir, "doc1", 2, 7)
        b = session_pair_ids(study_dir, "doc2", 2, 7)
        assert a != b
        assert sorted(a) == sorted(set(a))  # no duplicates

    def test_unknown_factor_404(self, client):
        assert client.get("/api/session", params={"annotator": "x", "factor": 3}).status_code == 404


class TestImages:
    def test_original_served(self, client):
        pid = client.get("/api/session", params={"annotator": "doc1", "factor": 2}).json()["pairs"][0]["pair_id"]
        resp = client.get(f"/api/image/{pid}/original")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"

    def test_sides_follow_secret_assignment(self, client, study_dir):
        session = client.get("/api/session", params={"annotator": "doc1", "factor": 2}).json()
        pid = session["pairs"][0]["pair_id"]
        sides = side_assignment("doc1", 2, pid, 7)
        left = client.get(f"/api/image/{pid}/left", params={"annotator": "doc1"})
        name = pid.split("-", 1)[1]
        expected = (study_dir / "x2" / name / f"method_{sides[0]}.png").read_bytes()
        assert left.content == expected

    def test_left_right_cover_both_methods(self, client):
        pid = client.get("/api/session", params={"annotator": "doc1", "factor": 2}).json()["pairs"][0]["pair_id"]
        left = client.get(f"/api/image/{pid}/left", params={"annotator": "doc1"}).content
        right = client.get(f"/api/image/{pid}/right", params={"annotator": "doc1"}).content
        assert left != right

    def test_side_assignment_varies_with_annotator(self, study_dir):
        ids = session_pair_ids(study_dir, "doc1", 2, 7)
        flips = {side_assignment(a, 2, p, 7) for a in ("doc1", "doc2", "doc3") for p in ids[:40]}
        assert flips == {"ab", "ba"}

    def test_unknown_pair_404(self, client):
        assert client.get("/api/image/2x-missing/original").status_code == 404
        assert client.get("/api/image/garbage/left", params={"annotator": "a"}).status_code == 404

    def test_left_without_annotator_400(self, client):
        pid = client.get("/api/session", params={"annotator": "doc1", "factor": 2}).json()["pairs"][0]["pair_id"]
        assert client.get(f"/api/image/{pid}/left").status_code == 400


class TestVoting:
    def test_full_session_round_trip(self, client):
        session = client.get("/api/session", params={"annotator": "doc1", "factor": 2}).json()
        assert len(session["pairs"]) == 100
        rng = np.random.default_rng(1)
        for p in session["pairs"]:
            side = "left" if rng.random() < 0.8 else "right"
            resp = client.post(
                "/api/vote",
                json={"annotator_id": "doc1", "factor": 2, "pair_id": p["pair_id"], "side": side},
            )
            assert resp.status_code == 200
            assert resp.json()["ok"] is True
            for name in METHOD_NAMES:
                assert name not in resp.text
        report = client.get("/api/report").json()
        counts = next(
            row["counts"]["2"] for row in report["annotators"] if row["annotator_id"] == "doc1"
        )
        assert sum(counts.values()) == 100

    def test_revote_last_wins(self, client):
        pid = client.get("/api/session", params={"annotator": "r", "factor": 2}).json()["pairs"][0]["pair_id"]
        for side in ("left", "right", "left"):
            client.post("/api/vote", json={"annotator_id": "r", "factor": 2, "pair_id": pid, "side": side})
        report = client.get("/api/report").json()
        counts = next(row["counts"]["2"] for row in report["annotators"] if row["annotator_id"] == "r")
        assert sum(counts.values()) == 1
        sides = side_assignment("r", 2, pid, 7)
        chosen = {"a": "cnn", "b": "lanczos"}[sides[0]]
        assert counts[chosen] == 1

    def test_unknown_pair_404(self, client):
        resp = client.post(
            "/api/vote", json={"annotator_id": "x", "factor": 2, "pair_id": "2x-nope", "side": "left"}
        )
        assert resp.status_code == 404

    def test_malformed_body_400_class(self, client):
        resp = client.post("/api/vote", json={"annotator_id": "x"})
        assert 400 <= resp.status_code < 500

    def test_bad_side_400(self, client):
        pid = client.get("/api/session", params={"annotator": "x", "factor": 2}).json()["pairs"][0]["pair_id"]
        resp = client.post(
            "/api/vote", json={"annotator_id": "x", "factor": 2, "pair_id": pid, "side": "middle"}
        )
        assert resp.status_code == 400

    def test_factor_mismatch_400(self, client):
        pid = client.get("/api/session", params={"annotator": "x", "factor": 2}).json()["pairs"][0]["pair_id"]
        resp = client.post(
            "/api/vote", json={"annotator_id": "x", "factor": 4, "pair_id": pid, "side": "left"}
        )
        assert resp.status_code == 400

    def test_votes_file_appends_single_lines(self, client, tmp_path):
        pid = client.get("/api/session", params={"annotator": "l", "factor": 2}).json()["pairs"][0]["pair_id"]
        client.post("/api/vote", json={"annotator_id": "l", "factor": 2, "pair_id": pid, "side": "left"})
        votes_file = tmp_path / "votes.jsonl"
        lines = votes_file.read_text().splitlines()
        assert all(json.loads(l) for l in lines)


class TestReporting:
    def test_aggregate_all_one_method(self):
        records = [
            VoteRecord(f"ann{a}", 2, f"2x-p{i}", "left", "cnn", 0.0)
            for a in range(18)
            for i in range(100)
        ]
        report = aggregate_report(records)
        assert report["overall_percent"]["2"]["cnn"] == 100.0

    def test_percentages_sum_to_100(self):
        rng = np.random.default_rng(3)
        records = [
            VoteRecord(f"a{a}", f_, f"{f_}x-p{i}", "left", rng.choice(["cnn", "lanczos"]), 0.0)
            for a in range(3)
            for f_ in (2, 4)
            for i in range(50)
        ]
        report = aggregate_report(records)
        for f_ in ("2", "4"):
            assert sum(report["overall_percent"][f_].values()) == pytest.approx(100.0)

    def test_published_style_split_reproduced(self):
        # 18 annotators x 100 votes, 44 dissents overall (the shape of the
        # published study aggregate): percentages are exact vote fractions
        records = []
        for a in range(18):
            dissents = 15 if a == 1 else (14 if a == 3 else (5 if a == 5 else (10 if a == 7 else 0)))
            for i in range(100):
                method = "lanczos" if i < dissents else "cnn"
                records.append(VoteRecord(f"ann{a:02d}", 2, f"2x-p{i}", "left", method, 0.0))
        report = aggregate_report(records)
        assert report["overall_percent"]["2"]["lanczos"] == pytest.approx(100.0 * 44 / 1800)
        assert report["overall_percent"]["2"]["cnn"] == pytest.approx(100.0 * 1756 / 1800)
        assert report["annotators"][1]["counts"]["2"] == {"cnn": 85, "lanczos": 15}

    def test_table_structure(self):
        records = [
            VoteRecord("doc1", 2, "2x-p0", "left", "cnn", 0.0),
            VoteRecord("doc1", 2, "2x-p1", "right", "lanczos", 0.0),
        ]
        text = format_report(aggregate_report(records))
        assert "doc1" in text
        assert "overall in %" in text

    def test_corrupt_lines_skipped_counted(self, tmp_path):
        path = tmp_path / "v.jsonl"
        rec = VoteRecord("a", 2, "2x-p0", "left", "cnn", 0.0)
        log = VoteLog(path)
        log.append(rec)
        with open(path, "a") as f:
            f.write("this is not json\n")
        log.append(rec)
        records, skipped = log.read()
        assert len(records) == 2
        assert skipped == 1

    def test_empty_report(self):
        assert format_report(aggregate_report([])) == "(no votes)"


def test_frontend_static_mount(study_dir, tmp_path):
    ui = tmp_path / "dist"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>study ui</body></html>")
    app = create_app(study_dir, study_seed=1, votes_path=tmp_path / "v.jsonl", frontend_dir=ui)
    client = TestClient(app)
    resp = client.get("/")
    assert resp.status_code == 200
    assert "study ui" in resp.text
    # API routes still take precedence over the static mount
    assert client.get("/api/session", params={"annotator": "a", "factor": 2}).status_code == 200
