"""JSON-Lines completions in, JSON-Lines / CSV out.

One line per completion::

    {"prompt_id": "p1", "completion_id": "c0", "reward": 1.0, "embedding": [...], "text": "..."}

Lines are grouped by ``prompt_id`` in order of first appearance. Floats are
written with 17 significant digits so a write/read cycle is lossless.
Every writer goes through ``atomic_write_text``: nothing is left behind if
serialization fails halfway.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .core import CompletionGroup, DimensionMismatch, DraError
from .rewards import RewardConfig, score_completion


class ParseError(DraError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(DraError):
    def __init__(self, prompt_id: str, message: str):
        super().__init__(f"prompt {prompt_id!r}: {message}")
        self.prompt_id = prompt_id


class MixedDimension(ValidationError):
    pass


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    return format(float(x), ".17g")


def dumps(obj: Any) -> str:
    """Compact JSON with every float at 17 significant digits."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k), ensure_ascii=False)}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


@dataclass
class Record:
    line: int
    data: dict


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def read_records(path: str | os.PathLike, reward_config: Optional[RewardConfig] = None) -> list[Record]:
    """Parse and schema-check every line.

    A line without ``reward`` is scored from ``text`` and ``ground_truth``
    when ``reward_config`` is given; otherwise it is a parse error.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(data, dict):
                raise ParseError(lineno, "expected a JSON object")
            for key in ("prompt_id", "completion_id"):
                if not isinstance(data.get(key), str):
                    raise ParseError(lineno, f"{key!r} must be a string")
            if "reward" not in data and reward_config is not None:
                if not isinstance(data.get("text"), str) or not isinstance(data.get("ground_truth"), str):
                    raise ParseError(lineno, "no 'reward', and no 'text'/'ground_truth' to score")
                data["reward"] = score_completion(data["text"], data["ground_truth"], reward_config)
            if not _is_number(data.get("reward")):
                raise ParseError(lineno, "'reward' must be a number")
            emb = data.get("embedding")
            if not isinstance(emb, list) or not all(_is_number(v) for v in emb):
                raise ParseError(lineno, "'embedding' must be a list of numbers")
            if "text" in data and data["text"] is not None and not isinstance(data["text"], str):
                raise ParseError(lineno, "'text' must be a string")
            records.append(Record(lineno, data))
    return records


def group_records(records: Iterable[Record]) -> dict[str, list[Record]]:
    grouped: dict[str, list[Record]] = {}
    for rec in records:
        grouped.setdefault(rec.data["prompt_id"], []).append(rec)
    return grouped


def build_group(prompt_id: str, records: Sequence[Record]) -> CompletionGroup:
    dims = {len(r.data["embedding"]) for r in records}
    if len(dims) > 1:
        raise MixedDimension(prompt_id, f"embeddings of dimensions {sorted(dims)}")
    texts = [r.data.get("text") for r in records]
    try:
        return CompletionGroup.build(
            prompt_id=prompt_id,
            completion_ids=[r.data["completion_id"] for r in records],
            rewards=[float(r.data["reward"]) for r in records],
            embeddings=[r.data["embedding"] for r in records],
            texts=None if all(t is None for t in texts) else texts,
        )
    except DimensionMismatch as exc:
        raise MixedDimension(prompt_id, str(exc)) from None
    except DraError as exc:
        raise ValidationError(prompt_id, str(exc)) from None


def ingest_completions(
    path: str | os.PathLike,
    errors: Optional[list] = None,
    reward_config: Optional[RewardConfig] = None,
) -> list[CompletionGroup]:
    """Read a completions file into validated groups, in file order.

    If ``errors`` is a list, invalid groups are appended to it as
    ``ValidationError`` and skipped; otherwise the first one is raised.
    Parse errors are always raised.
    """
    groups = []
    for prompt_id, recs in group_records(read_records(path, reward_config)).items():
        try:
            groups.append(build_group(prompt_id, recs))
        except ValidationError as exc:
            if errors is None:
                raise
            errors.append(exc)
    return groups


def group_to_lines(group: CompletionGroup) -> list[str]:
    lines = []
    for i, cid in enumerate(group.completion_ids):
        obj = {
            "prompt_id": group.prompt_id,
            "completion_id": cid,
            "reward": float(group.rewards[i]),
            "embedding": [float(v) for v in group.embeddings[i]],
        }
        if group.texts is not None:
            obj["text"] = group.texts[i]
        lines.append(dumps(obj))
    return lines


def write_completions(groups: Iterable[CompletionGroup], path: str | os.PathLike) -> None:
    lines = [line for g in groups for line in group_to_lines(g)]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def synth_groups(
    kind: str,
    n_prompts: int = 500,
    group_size: int = 6,
    dim: int = 16,
    seed: int = 0,
    noise: float = 0.05,
) -> list[CompletionGroup]:
    """Synthetic completions for calibrating the reward/diversity analysis.

    ``null``: rewards and embeddings drawn independently.
    ``monotone``: completions lie along one arc leaving a per-prompt center
    (plus small off-arc noise) and the reward is a decreasing function of the
    angular distance to that center, so reward gaps track semantic distances.
    """
    rng = np.random.default_rng(seed)
    groups = []
    for k in range(n_prompts):
        if kind == "null":
            rewards = rng.normal(size=group_size)
            emb = rng.normal(size=(group_size, dim))
        elif kind == "monotone":
            basis, _ = np.linalg.qr(rng.normal(size=(dim, 2)))
            center, along = basis[:, 0], basis[:, 1]
            theta = rng.uniform(0.0, np.pi / 2, size=group_size)
            emb = np.cos(theta)[:, None] * center + np.sin(theta)[:, None] * along
            emb = emb + noise * rng.normal(size=(group_size, dim)) / np.sqrt(dim)
            rewards = 3.0 * np.cos(theta)
        else:
            raise ValueError(f"unknown synthetic dataset kind {kind!r}")
        groups.append(
            CompletionGroup.build(
                prompt_id=f"{kind}-{k:05d}",
                completion_ids=[f"c{i}" for i in range(group_size)],
                rewards=rewards,
                embeddings=emb,
            )
        )
    return groups
