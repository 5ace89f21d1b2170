"""Pairwise image-assessment service.

Serves pre-rendered comparison pairs to human annotators: the original
slice plus two reconstructions whose left/right placement is a
deterministic, secret function of (annotator, factor, pair, study
seed). Annotators submit forced-choice votes; votes land in an
append-only JSONL file (one record per line, last vote per pair wins).

Study directory layout::

    results_dir/
      study.json                 {"methods": {"a": "<name>", "b": "<name>"}}
      x2/<pair>/original.png
      x2/<pair>/method_a.png
      x2/<pair>/method_b.png
      x4/...

Session and image responses never name the methods; aggregation (the
/api/report endpoint and ``study_report``) is meant for the study owner
after the fact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from pydantic import BaseModel

logger = logging.getLogger(__name__)


class VoteBody(BaseModel):
    annotator_id: str
    factor: int
    pair_id: str
    side: str

SESSION_SIZE = 100
FACTORS = (2, 4)
SIDES = ("left", "right")


# ---------------------------------------------------------------------------
# Deterministic session construction
# ---------------------------------------------------------------------------


def _digest(*parts) -> bytes:
    return hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()


def pair_pool(results_dir: str | Path, factor: int) -> list[str]:
    """Pair directory names available for a factor, sorted."""
    base = Path(results_dir) / f"x{factor}"
    if not base.is_dir():
        return []
    return sorted(d.name for d in base.iterdir() if (d / "original.png").exists())


def session_pair_ids(results_dir, annotator_id: str, factor: int, study_seed: int) -> list[str]:
    """Up to 100 pair ids in an order deterministic in (annotator, factor, seed)."""
    pool = pair_pool(results_dir, factor)
    order = sorted(
        pool, key=lambda name: _digest(study_seed, annotator_id, factor, "order", name)
    )
    chosen = order[:SESSION_SIZE]
    if len(chosen) < SESSION_SIZE:
        logger.warning(
            "pool for factor %d has only %d pairs; session for %r will be short",
            factor,
            len(chosen),
            annotator_id,
        )
    return [f"{factor}x-{name}" for name in chosen]


def side_assignment(annotator_id: str, factor: int, pair_id: str, study_seed: int) -> str:
    """"ab" when method_a is on the left for this annotator, else "ba"."""
    bit = _digest(study_seed, annotator_id, factor, "side", pair_id)[0] & 1
    return "ab" if bit == 0 else "ba"


def split_pair_id(pair_id: str) -> tuple[int, str]:
    """A served pair id is "<factor>x-<directory name>"."""
    head, _, name = pair_id.partition("-")
    if not head.endswith("x") or not name:
        raise ValueError(f"malformed pair id {pair_id!r}")
    return int(head[:-1]), name


# ---------------------------------------------------------------------------
# Vote log
# ---------------------------------------------------------------------------


@dataclass
class VoteRecord:
    annotator_id: str
    factor: int
    pair_id: str
    chosen_side: str
    chosen_method: str
    timestamp: float


class VoteLog:
    """Append-only JSONL vote store with a single serialized writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: VoteRecord) -> None:
        line = json.dumps(record.__dict__, sort_keys=True)
        with self._lock:
            with open(self.path, "a") as f:
                f.write(line + "\n")
                f.flush()

    def read(self) -> tuple[list[VoteRecord], int]:
        """All parseable records plus the count of corrupt lines skipped."""
        if not self.path.exists():
            return [], 0
        records, skipped = [], 0
        for line in self.path.read_text().splitlines():
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                records.append(
                    VoteRecord(
                        annotator_id=str(d["annotator_id"]),
                        factor=int(d["factor"]),
                        pair_id=str(d["pair_id"]),
                        chosen_side=str(d["chosen_side"]),
                        chosen_method=str(d["chosen_method"]),
                        timestamp=float(d.get("timestamp", 0.0)),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                skipped += 1
        if skipped:
            logger.warning("skipped %d corrupt vote line(s) in %s", skipped, self.path)
        return records, skipped


def effective_votes(records: list[VoteRecord]) -> dict[tuple[str, int, str], VoteRecord]:
    """Last vote wins per (annotator, factor, pair)."""
    out: dict[tuple[str, int, str], VoteRecord] = {}
    for rec in records:
        out[(rec.annotator_id, rec.factor, rec.pair_id)] = rec
    return out


def aggregate_report(records: list[VoteRecord]) -> dict:
    """Per-annotator counts per method per factor, plus overall percentages."""
    votes = effective_votes(records)
    methods = sorted({v.chosen_method for v in votes.values()})
    factors = sorted({v.factor for v in votes.values()})
    annotators = sorted({v.annotator_id for v in votes.values()})
    table = {
        a: {f: {m: 0 for m in methods} for f in factors} for a in annotators
    }
    for v in votes.values():
        table[v.annotator_id][v.factor][v.chosen_method] += 1
    overall = {}
    for f in factors:
        totals = {m: sum(table[a][f][m] for a in annotators) for m in methods}
        n = sum(totals.values())
        overall[f] = {m: (100.0 * totals[m] / n if n else 0.0) for m in methods}
    return {
        "methods": methods,
        "factors": factors,
        "annotators": [
            {"annotator_id": a, "counts": {str(f): table[a][f] for f in factors}}
            for a in annotators
        ],
        "overall_percent": {str(f): overall[f] for f in factors},
    }


def format_report(report: dict) -> str:
    """Render the aggregate as a per-annotator count table with an overall % row."""
    methods = report["methods"]
    factors = report["factors"]
    if not methods:
        return "(no votes)"
    cols = [(f, m) for f in factors for m in methods]
    header = f"{'annotator':<16}" + "".join(f"{f}x {m:>12}"[:16].rjust(18) for f, m in cols)
    lines = [header]
    for row in report["annotators"]:
        cells = "".join(f"{row['counts'][str(f)][m]:>18d}" for f, m in cols)
        lines.append(f"{row['annotator_id']:<16}" + cells)
    overall = "".join(
        f"{report['overall_percent'][str(f)][m]:>17.2f}%" for f, m in cols
    )
    lines.append(f"{'overall in %':<16}" + overall)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Study directory helpers
# ---------------------------------------------------------------------------


def write_study_pair(
    results_dir: str | Path,
    factor: int,
    name: str,
    original: np.ndarray,
    method_a: np.ndarray,
    method_b: np.ndarray,
) -> None:
    """Render one comparison triple into the study layout (8-bit PNGs)."""
    d = Path(results_dir) / f"x{factor}" / name
    d.mkdir(parents=True, exist_ok=True)
    for fname, img in (("original", original), ("method_a", method_a), ("method_b", method_b)):
        q = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
        Image.fromarray(q, mode="L").save(d / f"{fname}.png")


def write_study_manifest(results_dir: str | Path, method_a: str, method_b: str) -> None:
    Path(results_dir, "study.json").write_text(
        json.dumps({"methods": {"a": method_a, "b": method_b}}, indent=1)
    )


# ---------------------------------------------------------------------------
# HTTP service
# ---------------------------------------------------------------------------


def create_app(results_dir: str | Path, study_seed: int = 0, votes_path=None, frontend_dir=None):
    """Build the FastAPI app serving sessions, images, votes and reports."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse

    results_dir = Path(results_dir)
    manifest = json.loads((results_dir / "study.json").read_text())
    method_names = manifest["methods"]  # {"a": ..., "b": ...}
    votes = VoteLog(votes_path or results_dir / "votes.jsonl")
    app = FastAPI(title="medsr pairwise study")

    def _known(pair_id: str) -> tuple[int, Path]:
        try:
            factor, name = split_pair_id(pair_id)
        except ValueError:
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id!r}")
        d = results_dir / f"x{factor}" / name
        if not (d / "original.png").exists():
            raise HTTPException(status_code=404, detail=f"unknown pair {pair_id!r}")
        return factor, d

    @app.get("/api/session")
    def get_session(annotator: str, factor: int):
        if factor not in FACTORS:
            raise HTTPException(status_code=404, detail=f"no study for factor {factor}")
        ids = session_pair_ids(results_dir, annotator, factor, study_seed)
        recorded = effective_votes(votes.read()[0])
        pairs = []
        for i, pid in enumerate(ids):
            rec = recorded.get((annotator, factor, pid))
            pairs.append(
                {"pair_id": pid, "index": i, "voted_side": rec.chosen_side if rec else None}
            )
        return {"annotator_id": annotator, "factor": factor, "pairs": pairs}

    @app.get("/api/image/{pair_id}/{role}")
    def get_image(pair_id: str, role: str, annotator: str = ""):
        factor, d = _known(pair_id)
        if role == "original":
            return FileResponse(d / "original.png", media_type="image/png")
        if role not in SIDES:
            raise HTTPException(status_code=404, detail=f"unknown role {role!r}")
        if not annotator:
            raise HTTPException(status_code=400, detail="annotator query parameter required")
        sides = side_assignment(annotator, factor, pair_id, study_seed)
        key = sides[0] if role == "left" else sides[1]
        return FileResponse(d / f"method_{key}.png", media_type="image/png")

    @app.post("/api/vote")
    def post_vote(body: VoteBody):
        if body.side not in SIDES:
            raise HTTPException(status_code=400, detail="side must be 'left' or 'right'")
        factor, _ = _known(body.pair_id)
        if factor != body.factor:
            raise HTTPException(
                status_code=400, detail=f"pair {body.pair_id!r} is not a {body.factor}x pair"
            )
        sides = side_assignment(body.annotator_id, body.factor, body.pair_id, study_seed)
        key = sides[0] if body.side == "left" else sides[1]
        votes.append(
            VoteRecord(
                annotator_id=body.annotator_id,
                factor=body.factor,
                pair_id=body.pair_id,
                chosen_side=body.side,
                chosen_method=method_names[key],
                timestamp=time.time(),
            )
        )
        return {"ok": True, "pair_id": body.pair_id}

    @app.get("/api/report")
    def get_report():
        return aggregate_report(votes.read()[0])

    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
