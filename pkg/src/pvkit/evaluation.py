"""Evaluation machinery: simulatability-quiz construction and scoring,
rank-sum significance testing, and the decoder-invariance comparison.

Running a human study is out of scope; this module produces the quiz assets
and analyzes whatever response files come back.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses
from .data import OutcomePartition
from .errors import ShapeError

ABSTAIN_OPTION = "I just can't tell"
N_OPTIONS = 5


@dataclass
class QuizQuestion:
    sample_id: str
    asset_digest: str
    options: list[str]
    model_prediction: str
    truth_labels: list[str]
    outcome: str

    def __post_init__(self):
        if len(self.options) != N_OPTIONS or len(set(self.options)) != N_OPTIONS:
            raise ValueError("a question needs exactly 5 distinct options")
        if self.model_prediction not in self.options:
            raise ValueError("options must contain the model's prediction")
        if ABSTAIN_OPTION not in self.options:
            raise ValueError(f"options must contain {ABSTAIN_OPTION!r}")


def _question_rng(seed: int, sample_id: str) -> np.random.Generator:
    # keyed by (seed, sample) only, so option sets cannot depend on which
    # explainer variant the quiz is built for
    h = hashlib.sha256(f"{seed}:{sample_id}".encode()).digest()
    return np.random.default_rng(int.from_bytes(h[:8], "little"))


def build_quiz(partition: OutcomePartition, predictions: dict,
               class_names: list[str], n_correct: int = 16,
               n_incorrect: int = 14, seed: int = 0,
               asset_digests: dict | None = None) -> list[QuizQuestion]:
    """Assemble the multiple-choice quiz.

    predictions maps sample_id -> (predicted class name, list of target class
    names). Each question offers the model's prediction, three other target
    labels (dropping extras or padding with seeded random classes), and the
    abstain option, in seeded random order. Questions are drawn from the
    correct and incorrect pools; mixed samples are never used.
    """
    if len(partition.correct) < n_correct or len(partition.incorrect) < n_incorrect:
        raise ValueError(
            f"pool too small: need {n_correct}/{n_incorrect}, have "
            f"{len(partition.correct)}/{len(partition.incorrect)}")
    rng = np.random.default_rng(seed)
    chosen = [(str(sid), "correct") for sid in
              rng.choice(sorted(partition.correct), n_correct, replace=False)]
    chosen += [(str(sid), "incorrect") for sid in
               rng.choice(sorted(partition.incorrect), n_incorrect, replace=False)]

    questions = []
    for sid, outcome in chosen:
        pred_name, truth = predictions[sid]
        qrng = _question_rng(seed, sid)
        distractors = [t for t in truth if t != pred_name]
        if len(distractors) > 3:
            distractors = list(qrng.choice(distractors, 3, replace=False))
        while len(distractors) < 3:
            extra = class_names[qrng.integers(len(class_names))]
            if extra != pred_name and extra not in distractors:
                distractors.append(extra)
        options = [pred_name] + distractors + [ABSTAIN_OPTION]
        qrng.shuffle(options)
        questions.append(QuizQuestion(
            sample_id=sid,
            asset_digest=(asset_digests or {}).get(sid, ""),
            options=options,
            model_prediction=pred_name,
            truth_labels=list(truth),
            outcome=outcome))
    return questions


@dataclass
class QuizScores:
    accuracy_correct: float
    accuracy_incorrect: float
    stderr_correct: float
    stderr_incorrect: float
    per_user: dict  # user_id -> {"correct": (hits, asked), "incorrect": (hits, asked)}


def score_responses(quiz: list[QuizQuestion], responses) -> QuizScores:
    """Score response rows (user_id, question_id, chosen_option).

    question_id is the question's sample_id. A response is a hit exactly when
    it matches the model's prediction; accuracies are aggregated separately
    over correct-outcome and incorrect-outcome questions, with the standard
    error of per-user accuracies.
    """
    by_id = {q.sample_id: q for q in quiz}
    per_user: dict = {}
    for user_id, qid, option in responses:
        q = by_id.get(qid)
        if q is None:
            raise ValueError(f"unknown question id: {qid}")
        if option not in q.options:
            raise ValueError(f"option {option!r} not offered for question {qid}")
        u = per_user.setdefault(user_id, {"correct": [0, 0], "incorrect": [0, 0]})
        u[q.outcome][1] += 1
        if option == q.model_prediction:
            u[q.outcome][0] += 1

    def subset_stats(key):
        accs = [hits / asked for (hits, asked) in
                (u[key] for u in per_user.values()) if asked > 0]
        if not accs:
            return float("nan"), float("nan")
        mean = float(np.mean(accs))
        se = float(np.std(accs, ddof=1) / math.sqrt(len(accs))) if len(accs) > 1 else 0.0
        return mean, se

    acc_c, se_c = subset_stats("correct")
    acc_i, se_i = subset_stats("incorrect")
    return QuizScores(
        accuracy_correct=acc_c, accuracy_incorrect=acc_i,
        stderr_correct=se_c, stderr_incorrect=se_i,
        per_user={u: {k: tuple(v) for k, v in d.items()}
                  for u, d in per_user.items()})


def read_responses_csv(path):
    """CSV with columns user_id, question_id, chosen_option."""
    with open(path, newline="") as f:
        return [(row["user_id"], row["question_id"], row["chosen_option"])
                for row in csv.DictReader(f)]


def export_quiz(quiz: list[QuizQuestion], path):
    Path(path).write_text(json.dumps([{
        "sample_id": q.sample_id,
        "asset_digest": q.asset_digest,
        "options": q.options,
        "model_prediction": q.model_prediction,
        "truth_labels": q.truth_labels,
        "outcome": q.outcome,
    } for q in quiz], indent=2))


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(a, b, tail: str = "two_sided") -> tuple[float, float, float]:
    """Mann-Whitney U by direct pair counting, ties counted as half a win.

    Returns (U, Z, p) where U counts pairs won by a. Z uses the normal
    approximation with tie-corrected variance; p is one-tailed for
    tail='greater' (H1: a tends larger than b) or tail='less', and
    two-tailed for 'two_sided'.
    """
    a, b = list(a), list(b)
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    if tail not in ("less", "greater", "two_sided"):
        raise ValueError(f"unknown tail: {tail!r}")
    n1, n2 = len(a), len(b)
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    # tie-corrected variance of U under H0
    n = n1 + n2
    combined = sorted(a + b)
    tie_term = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and combined[j] == combined[i]:
            j += 1
        t = j - i
        tie_term += t ** 3 - t
        i = j
    if n > 1:
        var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    else:
        var = 0.0
    mean = n1 * n2 / 2.0
    z = (u - mean) / math.sqrt(var) if var > 0 else 0.0
    if tail == "greater":
        p = _norm_sf(z)
    elif tail == "less":
        p = _norm_sf(-z)
    else:
        p = min(1.0, 2.0 * _norm_sf(abs(z)))
    return u, z, p


@dataclass
class InvarianceReport:
    ssim_pair: list[float]       # trained-A vs trained-B, per sample
    mse_pair: list[float]
    ssim_baseline: list[float]   # trained vs untrained, per sample
    mse_baseline: list[float]

    @property
    def mean_ssim_pair(self) -> float:
        return float(np.mean(self.ssim_pair))

    @property
    def mean_ssim_baseline(self) -> float:
        return float(np.mean(self.ssim_baseline))

    @property
    def mean_mse_pair(self) -> float:
        return float(np.mean(self.mse_pair))

    @property
    def mean_mse_baseline(self) -> float:
        return float(np.mean(self.mse_baseline))

    def to_dict(self) -> dict:
        return {
            "mean_ssim_pair": self.mean_ssim_pair,
            "mean_ssim_baseline": self.mean_ssim_baseline,
            "mean_mse_pair": self.mean_mse_pair,
            "mean_mse_baseline": self.mean_mse_baseline,
            "n_samples": len(self.ssim_pair),
        }


def _mean_ssim(x: np.ndarray, y: np.ndarray, window: int) -> float:
    return float(np.mean([losses.ssim_index(x, y, c, window_size=window)
                          for c in ("R", "G", "B")]))


def decoder_invariance(dec_a, dec_b, dec_untrained, enc,
                       images: np.ndarray, ssim_window: int = 11) -> InvarianceReport:
    """How similar two independently trained decoders' reconstructions are,
    relative to an untrained decoder of the same architecture."""
    from .decoder import decode
    from .model_core import encode

    for d in (dec_a, dec_b, dec_untrained):
        if tuple(d.cfg.latent_shape) != tuple(enc.latent_shape):
            raise ShapeError(
                f"decoder latent {d.cfg.latent_shape} != encoder {enc.latent_shape}")
    ssim_pair, mse_pair, ssim_base, mse_base = [], [], [], []
    for x in images:
        z = encode(enc, x)
        ya = decode(dec_a, z).values
        yb = decode(dec_b, z).values
        yu = decode(dec_untrained, z).values
        ssim_pair.append(_mean_ssim(ya, yb, ssim_window))
        mse_pair.append(float(np.mean((ya - yb) ** 2)))
        ssim_base.append((_mean_ssim(ya, yu, ssim_window)
                          + _mean_ssim(yb, yu, ssim_window)) / 2.0)
        mse_base.append((float(np.mean((ya - yu) ** 2))
                         + float(np.mean((yb - yu) ** 2))) / 2.0)
    return InvarianceReport(ssim_pair=ssim_pair, mse_pair=mse_pair,
                            ssim_baseline=ssim_base, mse_baseline=mse_base)
