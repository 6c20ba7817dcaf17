"""Equal error rate, real-time factor and condition x duration reports."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .features import CONDITIONS, DURATIONS, FRAMES_PER_DURATION, LABELS
from .tensor import no_grad


def compute_eer(scores, labels) -> tuple[float, float]:
    """EER and its threshold; label 1 (or "spoof") is the positive class.

    Thresholds are the sorted unique scores plus +inf.  FAR(t) is the share of
    bona fide scores >= t and FRR(t) the share of spoof scores < t.  The first
    threshold where FAR meets FRR wins; if they cross between two thresholds
    the EER is linearly interpolated there.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = _as_targets(labels)
    if scores.shape != labels.shape:
        raise ConfigError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise ConfigError("scores must be finite")
    bona = np.sort(scores[labels == 0])
    spoof = np.sort(scores[labels == 1])
    if bona.size == 0 or spoof.size == 0:
        raise ConfigError("EER needs at least one bona fide and one spoof score")
    cands = np.append(np.unique(scores), np.inf)
    far = (bona.size - np.searchsorted(bona, cands, side="left")) / bona.size
    frr = np.searchsorted(spoof, cands, side="left") / spoof.size
    diff = far - frr
    # diff starts at 1 (t = min) and ends at -1 (t = inf), and never increases
    k = int(np.argmax(diff <= 0))
    if diff[k] == 0:
        return float(far[k]), float(cands[k])
    d0, d1 = diff[k - 1], diff[k]
    a = d0 / (d0 - d1)
    eer = far[k - 1] + a * (far[k] - far[k - 1])
    hi = cands[k] if np.isfinite(cands[k]) else cands[k - 1]
    return float(eer), float(cands[k - 1] + a * (hi - cands[k - 1]))


def _as_targets(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab not in LABELS:
                raise ConfigError(f"unknown label {lab!r}")
            out.append(LABELS.index(lab))
        else:
            if int(lab) not in (0, 1):
                raise ConfigError(f"labels must be 0/1, got {lab}")
            out.append(int(lab))
    return np.asarray(out, dtype=np.int64)


def measure_rtf(model, duration_s: float, n_trials: int = 10, warmup: int = 3, seed: int = 0) -> float:
    """Median single-utterance forward time divided by the utterance duration."""
    model.eval()
    x = np.random.default_rng(seed).standard_normal((1, 1, model.cfg.input_f, FRAMES_PER_DURATION[duration_s]))
    times = []
    with no_grad():
        for i in range(warmup + n_trials):
            start = time.perf_counter()
            model(x)
            if i >= warmup:
                times.append(time.perf_counter() - start)
    return statistics.median(times) / duration_s


# ------------------------------------------------------------------ scores
SCORE_COLUMNS = ("clip_id", "duration", "condition", "label", "score")


@dataclass(frozen=True)
class ScoreRow:
    clip_id: str
    duration: float
    condition: str
    label: str
    score: float


def write_scores(path, rows: list[ScoreRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_COLUMNS)
        for r in rows:
            w.writerow([r.clip_id, f"{r.duration:g}", r.condition, r.label, repr(float(r.score))])


def read_scores(path) -> list[ScoreRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCORE_COLUMNS:
            raise ConfigError(f"{path}: expected header {','.join(SCORE_COLUMNS)}")
        return [ScoreRow(r["clip_id"], float(r["duration"]), r["condition"], r["label"], float(r["score"])) for r in reader]


# ------------------------------------------------------------------ report
REPORT_COLUMNS = ("duration",) + CONDITIONS + ("Avg", "RTF", "params", "GFLOPs")


@dataclass
class ReportRow:
    duration: float
    eer: dict[str, float] = field(default_factory=dict)
    rtf: float | None = None
    params: int | None = None
    gflops: float | None = None

    @property
    def avg(self) -> float | None:
        """Mean over the condition cells that are present."""
        vals = [self.eer[c] for c in CONDITIONS if c in self.eer]
        return math.fsum(vals) / len(vals) if vals else None


@dataclass
class EvalReport:
    rows: dict[float, ReportRow] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for d in sorted(self.rows):
            r = self.rows[d]
            cells = [f"{d:g}"] + [_fmt(r.eer.get(c)) for c in CONDITIONS]
            cells += [_fmt(r.avg), _fmt(r.rtf), "" if r.params is None else str(r.params), _fmt(r.gflops)]
            w.writerow(cells)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader, ()))
        if header != REPORT_COLUMNS:
            raise ConfigError(f"report header must be {','.join(REPORT_COLUMNS)}")
        report = cls()
        for cells in reader:
            if not cells:
                continue
            rec = dict(zip(REPORT_COLUMNS, cells))
            d = float(rec["duration"])
            row = ReportRow(d, {c: float(rec[c]) for c in CONDITIONS if rec[c] != ""})
            row.rtf = float(rec["RTF"]) if rec["RTF"] else None
            row.params = int(rec["params"]) if rec["params"] else None
            row.gflops = float(rec["GFLOPs"]) if rec["GFLOPs"] else None
            report.rows[d] = row
        return report

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_csv(Path(path).read_text())

    def __eq__(self, other) -> bool:
        return isinstance(other, EvalReport) and self.to_csv() == other.to_csv()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def build_report(score_rows: list[ScoreRow], models: dict | None = None, rtf_trials: int = 10) -> EvalReport:
    """Group scores by (duration, condition) into an EER grid.

    ``models`` maps duration to a trained network; when given, RTF, parameter
    and FLOP columns are filled for that duration.  A cell without both
    classes is left absent.
    """
    from .model import count_flops, count_params

    report = EvalReport()
    grouped: dict[tuple[float, str], list[ScoreRow]] = {}
    for r in score_rows:
        if r.duration not in DURATIONS or r.condition not in CONDITIONS:
            raise ConfigError(f"{r.clip_id}: unknown duration/condition {r.duration}/{r.condition}")
        grouped.setdefault((r.duration, r.condition), []).append(r)
    for (d, cond), rows in sorted(grouped.items()):
        row = report.rows.setdefault(d, ReportRow(d))
        labels = [r.label for r in rows]
        if len(set(labels)) == 2:
            row.eer[cond] = compute_eer([r.score for r in rows], labels)[0]
    for d, model in (models or {}).items():
        row = report.rows.setdefault(d, ReportRow(d))
        row.rtf = measure_rtf(model, d, n_trials=rtf_trials)
        row.params = count_params(model)
        row.gflops = count_flops(model.cfg, d) / 1e9
    return report
