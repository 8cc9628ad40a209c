"""Tier-1 automation: ballot reply classification and assisted suggestions.

A ballot reply is classified one option at a time: (reply text, option k) pairs
become binary feature vectors fed to a small logistic regression trained with
plain batch gradient descent. Features are indicator bits from an editable
word dictionary plus three option-relative matchers (does the reply mention
this option's day, clock time, or ordinal position).
"""

from __future__ import annotations

import json
import math
import os
import random
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import timeparse
from .timeparse import WEEKDAYS

# ===== Errors =====


class DegenerateCorpus(Exception):
    """Training split contains a single class; nothing to fit."""


# ===== Dictionary =====

DEFAULT_DICTIONARY_PATH = os.path.join(os.path.dirname(__file__), "data", "ballot_dictionary.txt")

_ORDINAL_WORDS = ["first", "second", "third", "fourth", "fifth", "sixth"]


def load_dictionary(path: Optional[str] = None) -> Dict[str, List[str]]:
    """Parse 'category: word,word' lines; comments and blanks ignored."""
    categories: Dict[str, List[str]] = {}
    with open(path or DEFAULT_DICTIONARY_PATH, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ValueError(f"bad dictionary line: {line!r}")
            category, words = line.split(":", 1)
            categories[category.strip()] = [w.strip().lower() for w in words.split(",") if w.strip()]
    return categories


def feature_names(dictionary: Dict[str, List[str]]) -> List[str]:
    names = [f"dict:{cat}/{word}" for cat in dictionary for word in dictionary[cat]]
    names.extend(["opt:day_match", "opt:time_match", "opt:ordinal_match"])
    return names


# ===== Options and featurization =====


@dataclass
class OptionAttrs:
    """How one ballot option reads to the classifier."""

    day_name: str          # e.g. "Wednesday"
    date: str              # YYYY-MM-DD
    clock: str             # e.g. "9:00am"
    zone: str
    position: int          # 1-based slot in the ballot
    option_count: int

    def to_dict(self) -> Dict:
        return {
            "day_name": self.day_name,
            "date": self.date,
            "clock": self.clock,
            "zone": self.zone,
            "position": self.position,
            "option_count": self.option_count,
        }

    @staticmethod
    def from_dict(d: Dict) -> "OptionAttrs":
        return OptionAttrs(
            day_name=d["day_name"], date=d["date"], clock=d["clock"],
            zone=d.get("zone", "UTC"), position=int(d["position"]),
            option_count=int(d["option_count"]),
        )


def clock_label(hour: int, minute: int) -> str:
    suffix = "am" if hour < 12 else "pm"
    h12 = hour % 12 or 12
    return f"{h12}:{minute:02d}{suffix}"


def _clock_forms(clock: str) -> List[str]:
    """Textual variants a reply might use for a clock label like '9:00am'."""
    m = re.fullmatch(r"(\d{1,2}):(\d{2})(am|pm)", clock)
    if not m:
        return [clock.lower()]
    h, mm, suffix = m.group(1), m.group(2), m.group(3)
    forms = [f"{h}:{mm}{suffix}", f"{h}:{mm} {suffix}", f"{h}:{mm}"]
    if mm == "00":
        forms.extend([f"{h}{suffix}", f"{h} {suffix}", f"{h} o'clock"])
    return forms


def tokenize(text: str) -> List[str]:
    return re.findall(r"\d+:\d+(?:am|pm)?|\d+(?:am|pm)?|[a-z']+", text.lower())


def featurize(response_text: str, option: OptionAttrs,
              dictionary: Dict[str, List[str]]) -> np.ndarray:
    """Binary feature vector for (reply, option)."""
    tokens = set(tokenize(response_text))
    low = response_text.lower()
    bits: List[float] = []
    for cat in dictionary:
        for word in dictionary[cat]:
            bits.append(1.0 if word in tokens else 0.0)
    bits.append(1.0 if option.day_name.lower() in tokens else 0.0)
    time_hit = any(re.search(rf"(?<![\d:]){re.escape(form)}", low) for form in _clock_forms(option.clock))
    bits.append(1.0 if time_hit else 0.0)
    ordinal_hit = False
    if option.position <= len(_ORDINAL_WORDS) and _ORDINAL_WORDS[option.position - 1] in tokens:
        ordinal_hit = True
    if option.position == option.option_count and "last" in tokens:
        ordinal_hit = True
    bits.append(1.0 if ordinal_hit else 0.0)
    return np.array(bits, dtype=np.float64)


# ===== Corpus records =====


@dataclass
class BallotResponseRecord:
    """One (reply, option, label) row; a ballot contributes option_count rows."""

    ballot_id: str
    response_text: str
    option: OptionAttrs
    selected: bool

    def to_dict(self) -> Dict:
        return {
            "ballot_id": self.ballot_id,
            "response_text": self.response_text,
            "option": self.option.to_dict(),
            "selected": self.selected,
        }

    @staticmethod
    def from_dict(d: Dict) -> "BallotResponseRecord":
        return BallotResponseRecord(
            ballot_id=d["ballot_id"], response_text=d["response_text"],
            option=OptionAttrs.from_dict(d["option"]), selected=bool(d["selected"]),
        )


def append_corpus(path: str, records: Sequence[BallotResponseRecord]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def load_corpus(path: str) -> List[BallotResponseRecord]:
    out: List[BallotResponseRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(BallotResponseRecord.from_dict(json.loads(line)))
    return out


def validate_corpus(records: Sequence[BallotResponseRecord]) -> None:
    """Every ballot must carry exactly option_count rows at positions 1..K."""
    by_ballot: Dict[str, List[BallotResponseRecord]] = {}
    for rec in records:
        by_ballot.setdefault(rec.ballot_id, []).append(rec)
    for ballot_id, rows in by_ballot.items():
        k = rows[0].option.option_count
        positions = sorted(r.option.position for r in rows)
        if positions != list(range(1, k + 1)):
            raise ValueError(f"ballot {ballot_id} has rows {positions}, expected 1..{k}")


# ===== Logistic regression =====


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    feature_names: List[str]
    threshold: float = 0.5
    margin: float = 0.15

    def predict_proba(self, x: np.ndarray) -> float:
        z = float(np.dot(self.weights, x) + self.bias)
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        ez = math.exp(z)
        return ez / (1.0 + ez)

    def decide(self, x: np.ndarray) -> Tuple[float, bool, bool]:
        """(probability, selected, confident)."""
        p = self.predict_proba(x)
        return p, p >= self.threshold, abs(p - self.threshold) >= self.margin

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({
                "weights": [float(w) for w in self.weights],
                "bias": float(self.bias),
                "feature_names": self.feature_names,
                "threshold": self.threshold,
                "margin": self.margin,
            }, fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path: str) -> "LogisticModel":
        with open(path, "r", encoding="utf-8") as fh:
            blob = json.load(fh)
        return LogisticModel(
            weights=np.array(blob["weights"], dtype=np.float64),
            bias=float(blob["bias"]),
            feature_names=list(blob["feature_names"]),
            threshold=float(blob.get("threshold", 0.5)),
            margin=float(blob.get("margin", 0.15)),
        )


def loss_and_grad(weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray,
                  l2: float) -> Tuple[float, np.ndarray, float]:
    """Mean log-loss + L2 on weights; gradient computed analytically.

    Uses the softplus form log(1+e^z) - y*z, which stays finite for any z and
    has exact gradient sigmoid(z) - y (no probability clipping needed).
    """
    z = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(np.dot(weights, weights))
    p = 1.0 / (1.0 + np.exp(-z))
    residual = (p - y) / len(y)
    grad_w = X.T @ residual + l2 * weights
    grad_b = float(np.sum(residual))
    return loss, grad_w, grad_b


def numeric_gradient_error(X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                           bias: float, l2: float, h: float = 1e-6) -> float:
    """Max relative disagreement between analytic and central-difference grads."""
    _, grad_w, grad_b = loss_and_grad(weights, bias, X, y, l2)
    worst = 0.0

    def rel(analytic: float, numeric: float) -> float:
        scale = max(abs(analytic), abs(numeric), 1e-8)
        return abs(analytic - numeric) / scale

    for i in range(len(weights)):
        bumped = weights.copy()
        bumped[i] += h
        up, _, _ = loss_and_grad(bumped, bias, X, y, l2)
        bumped[i] -= 2 * h
        down, _, _ = loss_and_grad(bumped, bias, X, y, l2)
        worst = max(worst, rel(grad_w[i], (up - down) / (2 * h)))
    up, _, _ = loss_and_grad(weights, bias + h, X, y, l2)
    down, _, _ = loss_and_grad(weights, bias - h, X, y, l2)
    worst = max(worst, rel(grad_b, (up - down) / (2 * h)))
    return worst


def _group_ballots(records: Sequence[BallotResponseRecord]) -> Dict[str, List[BallotResponseRecord]]:
    by_ballot: Dict[str, List[BallotResponseRecord]] = {}
    for rec in records:
        by_ballot.setdefault(rec.ballot_id, []).append(rec)
    return by_ballot


def train_classifier(records: Sequence[BallotResponseRecord],
                     dictionary: Optional[Dict[str, List[str]]] = None,
                     seed: int = 0, holdout_fraction: float = 0.2,
                     learning_rate: float = 0.1, epochs: int = 500,
                     l2: float = 1e-3) -> Tuple[LogisticModel, Dict]:
    """Fit on an 80/20 ballot-level split; report holdout metrics vs baseline."""
    dictionary = dictionary or load_dictionary()
    validate_corpus(records)
    by_ballot = _group_ballots(records)
    ballot_ids = sorted(by_ballot)
    rng = random.Random(seed)
    rng.shuffle(ballot_ids)
    n_holdout = max(1, int(round(len(ballot_ids) * holdout_fraction)))
    holdout_ids = set(ballot_ids[:n_holdout])
    train_rows = [r for bid in ballot_ids[n_holdout:] for r in by_ballot[bid]]
    holdout_rows = [r for bid in sorted(holdout_ids) for r in by_ballot[bid]]
    if not train_rows:
        raise DegenerateCorpus("no training rows after split")
    y_train = np.array([1.0 if r.selected else 0.0 for r in train_rows])
    if y_train.min() == y_train.max():
        raise DegenerateCorpus("training split has a single class")

    X_train = np.stack([featurize(r.response_text, r.option, dictionary) for r in train_rows])
    weights = np.zeros(X_train.shape[1], dtype=np.float64)
    bias = 0.0
    for _ in range(epochs):
        _, grad_w, grad_b = loss_and_grad(weights, bias, X_train, y_train, l2)
        weights -= learning_rate * grad_w
        bias -= learning_rate * grad_b
    model = LogisticModel(weights=weights, bias=bias, feature_names=feature_names(dictionary))

    baseline_label = bool(np.mean(y_train) >= 0.5)
    report = evaluate_classifier(model, holdout_rows, dictionary, baseline_label=baseline_label)
    report["n_train_ballots"] = len(ballot_ids) - n_holdout
    report["n_holdout_ballots"] = n_holdout
    report["baseline_label"] = baseline_label
    return model, report


def evaluate_classifier(model: LogisticModel, records: Sequence[BallotResponseRecord],
                        dictionary: Optional[Dict[str, List[str]]] = None,
                        baseline_label: Optional[bool] = None) -> Dict:
    """Per-choice and exact-subset accuracy, with a most-frequent-label baseline."""
    dictionary = dictionary or load_dictionary()
    if baseline_label is None:
        labels = [r.selected for r in records]
        baseline_label = labels.count(True) >= labels.count(False)
    by_ballot = _group_ballots(records)
    n_rows = 0
    correct_rows = 0
    baseline_rows = 0
    exact = 0
    baseline_exact = 0
    for bid in sorted(by_ballot):
        rows = sorted(by_ballot[bid], key=lambda r: r.option.position)
        all_ok = True
        base_ok = True
        for rec in rows:
            x = featurize(rec.response_text, rec.option, dictionary)
            _, selected, _ = model.decide(x)
            n_rows += 1
            if selected == rec.selected:
                correct_rows += 1
            else:
                all_ok = False
            if baseline_label == rec.selected:
                baseline_rows += 1
            else:
                base_ok = False
        exact += 1 if all_ok else 0
        baseline_exact += 1 if base_ok else 0
    n_ballots = max(1, len(by_ballot))
    n_rows = max(1, n_rows)
    return {
        "n_records": n_rows,
        "n_ballots": len(by_ballot),
        "per_choice_accuracy": correct_rows / n_rows,
        "exact_subset_accuracy": exact / n_ballots,
        "baseline_per_choice": baseline_rows / n_rows,
        "baseline_exact_subset": baseline_exact / n_ballots,
    }


def classify_ballot_reply(model: LogisticModel, response_text: str,
                          options: Sequence[OptionAttrs],
                          dictionary: Optional[Dict[str, List[str]]] = None) -> Dict:
    """Selections plus an all-options confidence flag for one reply."""
    dictionary = dictionary or load_dictionary()
    selections: List[bool] = []
    probs: List[float] = []
    confident = True
    for opt in options:
        p, selected, conf = model.decide(featurize(response_text, opt, dictionary))
        selections.append(bool(selected))
        probs.append(round(p, 6))
        confident = confident and conf
    return {"selections": selections, "probabilities": probs, "confident": confident}


# ===== Synthetic ballot corpus =====

_CLOCKS = [(9, 0), (10, 0), (11, 30), (13, 0), (14, 30), (16, 0)]
# Monday anchor for synthetic option dates
_ANCHOR = (2026, 9, 7)


def _synth_options(rng: random.Random, k: int) -> List[OptionAttrs]:
    days = rng.sample(range(5), k)
    clocks = rng.sample(_CLOCKS, k)
    opts = []
    for pos, (day_idx, (hh, mm)) in enumerate(zip(days, clocks), start=1):
        y, mo, dd = _ANCHOR
        opts.append(OptionAttrs(
            day_name=WEEKDAYS[day_idx].capitalize(),
            date=f"{y:04d}-{mo:02d}-{dd + day_idx:02d}",
            clock=clock_label(hh, mm),
            zone="UTC",
            position=pos,
            option_count=k,
        ))
    return opts


def _ordinal_word(position: int) -> str:
    return _ORDINAL_WORDS[position - 1]


def _easy_template(rng: random.Random, opts: List[OptionAttrs], k: int):
    family = rng.randrange(8)
    if family == 0:
        target = rng.choice(opts)
        text = rng.choice([
            f"Let's do it on {target.day_name}.",
            f"{target.day_name} works best for me.",
            f"I can meet on {target.day_name}.",
        ])
        return text, {target.position}
    if family == 1:
        target = rng.choice(opts)
        if target.position == k:
            text = rng.choice(["The last option is best.", "Only the last option works."])
        else:
            text = rng.choice([
                f"Only the {_ordinal_word(target.position)} option.",
                f"The {_ordinal_word(target.position)} one works for me.",
            ])
        return text, {target.position}
    if family == 2:
        a, b = rng.sample(opts, 2)
        text = rng.choice([
            f"{a.day_name} and {b.day_name} both work.",
            f"Either {a.day_name} or {b.day_name} works for me.",
            f"I could do {a.day_name} or {b.day_name}.",
        ])
        return text, {a.position, b.position}
    if family == 3:
        text = rng.choice(["All of those times work.", "All options work for my schedule."])
        return text, {o.position for o in opts}
    if family == 4:
        text = rng.choice(["Any of them would be fine.", "Any option works for me."])
        return text, {o.position for o in opts}
    if family == 5:
        text = rng.choice([
            "None of those times work for me.",
            "Unfortunately none of these work.",
            "I'm afraid none of the options fit.",
        ])
        return text, set()
    if family == 6:
        target = rng.choice(opts)
        text = rng.choice([
            f"{target.clock} on {target.day_name} is perfect.",
            f"{target.day_name} at {target.clock} works.",
        ])
        return text, {target.position}
    target = rng.choice(opts)
    text = rng.choice([
        f"{target.clock} works for me.",
        f"{target.clock} suits me best.",
    ])
    return text, {target.position}


def _hard_template(rng: random.Random, opts: List[OptionAttrs], k: int):
    # contrast and negation: surface day mentions disagree with labels, so a
    # bag-of-indicators model cannot get these systematically right
    if rng.random() < 0.5:
        a, b = rng.sample(opts, 2)
        return f"{a.day_name} works, but {b.day_name} does not.", {a.position}
    out = rng.choice(opts)
    text = rng.choice([
        f"Anything but {out.day_name}.",
        f"I can't do {out.day_name}, the other options work.",
    ])
    return text, {o.position for o in opts} - {out.position}


def generate_ballot_corpus(n_ballots: int, k: int = 3, seed: int = 0,
                           hard_fraction: float = 0.18) -> List[BallotResponseRecord]:
    """Template-grammar corpus with known per-option labels.

    Easy families cover day mentions, ordinals, clock times, and/or/both
    combinations, and quantifiers; hard_fraction of ballots use contrast or
    negation phrasings whose labels the indicator features cannot express.
    hard_fraction=0 yields a linearly separable corpus.
    """
    rng = random.Random(seed)
    records: List[BallotResponseRecord] = []
    for n in range(n_ballots):
        opts = _synth_options(rng, k)
        ballot_id = f"synth-{seed}-{n:05d}"
        if rng.random() < hard_fraction:
            text, chosen = _hard_template(rng, opts, k)
        else:
            text, chosen = _easy_template(rng, opts, k)
        for opt in opts:
            records.append(BallotResponseRecord(
                ballot_id=ballot_id,
                response_text=text,
                option=opt,
                selected=opt.position in chosen,
            ))
    return records


# ===== Assisted suggestions for microtasks =====


def assisted_suggestions(kind: str, payload: Dict,
                         model: Optional[LogisticModel] = None,
                         dictionary: Optional[Dict[str, List[str]]] = None,
                         assistant_name: str = "Cal") -> Optional[Dict]:
    """Prefill a worker form from tier-1 output; None when nothing useful."""
    if kind == "InterpretBallotResponse":
        if model is None:
            return None
        options = [OptionAttrs.from_dict(o) for o in payload.get("options", [])]
        text = payload.get("email", {}).get("body", "")
        if not options or not text:
            return None
        return classify_ballot_reply(model, text, options, dictionary)
    if kind == "ClassifyIntent":
        # Match rungs are ordered, so a participant-overlap match means the
        # subject rung already failed: same people, probably a new topic.
        verdict = "existing" if payload.get("match_kind") == "SubjectNormalized" else "new"
        return {"verdict": verdict, "request_id": payload.get("candidate_request_id")}
    if kind == "ExtractField":
        body = payload.get("email", {}).get("body", "")
        message_id = payload.get("email", {}).get("message_id", "msg")
        exprs = timeparse.scan_message(body, message_id)
        picked = timeparse.select_meeting_fields(exprs, body, assistant_name)
        fieldname = payload.get("field")
        if fieldname == "duration" and picked.duration:
            return {"field": "duration",
                    "value": timeparse.resolve_duration_minutes(picked.duration.value),
                    "evidence": picked.duration.text}
        if fieldname == "window" and picked.date:
            return {"field": "window", "value": picked.date.value, "evidence": picked.date.text}
        return None
    return None
