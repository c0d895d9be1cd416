"""Generation loop, per-step audit records, and model-free replay checks.

Each decode step samples a token the conventional way, then builds the
*input* for the next position from one of three feedback rules: the
sampled token's embedding row (standard), the truncated distribution used
verbatim as weights (direct_mixture), or the posterior-mean mixture
(moi).  The emitted token sequence is always the sampled discrete tokens;
only the fed-back representation changes.

Every step is recorded (token, entropy, distribution, weights, effective
mode) as one JSONL line, and `replay_verify` recomputes the weight math
from the recorded distributions alone: no model in the loop, so a trace
check is portable and exact at 1e-9.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, mix_core
from .embedding import lookup
from .mix_core import MixConfig
from .sampler import SamplerConfig, apply_temperature, make_rng, sample_position, top_p_truncate
from .toy_lm import Model

PRIOR_SOURCES = ("sampled_dist", "raw_softmax")


class TraceFormatError(ValueError):
    """Raised when a trace file violates the JSONL schema."""


@dataclass(frozen=True)
class GenConfig:
    mix: MixConfig = field(default_factory=MixConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    max_tokens: int = 64
    stop_tokens: frozenset = frozenset()
    prior_source: str = "sampled_dist"
    special_passthrough: bool = True
    special_tokens: frozenset = frozenset()

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.prior_source not in PRIOR_SOURCES:
            raise ValueError(f"prior_source must be one of {PRIOR_SOURCES}, got {self.prior_source!r}")
        object.__setattr__(self, "stop_tokens", frozenset(self.stop_tokens))
        object.__setattr__(self, "special_tokens", frozenset(self.special_tokens))


@dataclass(frozen=True)
class StepRecord:
    """Audit record for one decode step.

    `weights` is aligned with `support` (one weight per support id, zeros
    implied elsewhere).  `mode` is the feedback rule actually applied:
    passthrough steps under a mixing mode are recorded as "standard" so
    replay can reproduce them.
    """

    step: int
    token: int
    entropy: float
    support: np.ndarray
    probs: np.ndarray
    weights: np.ndarray
    mode: str


@dataclass
class GenerationResult:
    tokens: list[int]
    records: list[StepRecord]
    prefill_seconds: float
    decode_seconds: float
    prompt_tokens: int

    @property
    def generated_tokens(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class ReplayReport:
    passed: bool
    steps: int
    max_entropy_dev: float
    max_weight_dev: float
    first_failed_step: int | None = None

    def summary(self) -> str:
        status = "pass" if self.passed else f"FAIL at step {self.first_failed_step}"
        return (
            f"replay {status}: {self.steps} steps, "
            f"max |dH| = {self.max_entropy_dev:.3e}, max |dw| = {self.max_weight_dev:.3e}"
        )


def _step_weights(cfg: GenConfig, probs, pos: int, token: int, entropy: float) -> tuple[np.ndarray, str]:
    """Support-aligned feedback weights plus the mode actually applied.

    Identical arithmetic to the mix_core weight rules (replay recomputes
    through those public operations), inlined so the per-step cost stays
    a small fraction of the forward pass.
    """
    mode = cfg.mix.mode
    if cfg.special_passthrough and token in (cfg.stop_tokens | cfg.special_tokens):
        mode = "standard"
    if mode == "standard":
        weights = np.zeros(probs.shape[0], dtype=np.float64)
        weights[pos] = 1.0
        return weights, "standard"
    if mode == "direct_mixture":
        return probs.copy(), "direct_mixture"
    denom = cfg.mix.beta + 1.0
    weights = probs * (entropy / denom)
    weights[pos] += (cfg.mix.beta + 1.0 - entropy) / denom
    total = float(np.sum(weights))
    if abs(total - 1.0) > 1e-12:
        weights /= total
    return weights, "moi"


def generate(model: Model, prompt, cfg: GenConfig) -> GenerationResult:
    """Run the decode loop: sample, weight, mix, feed back.

    `prompt` is a nonempty sequence of token ids; prompt positions are fed
    as plain embedding rows (mixing applies only to generated positions).
    Generation stops after `cfg.max_tokens` tokens or right after a stop
    token is emitted; a stop token is recorded but never fed back.
    """
    prompt = [int(t) for t in prompt]
    vocab = model.config.vocab
    if not prompt:
        raise ValueError("prompt must contain at least one token")
    if any(t < 0 or t >= vocab for t in prompt):
        raise ValueError(f"prompt token outside vocabulary of size {vocab}")
    if len(prompt) + cfg.max_tokens > model.config.context:
        raise ValueError(
            f"prompt ({len(prompt)}) + max_tokens ({cfg.max_tokens}) exceeds "
            f"model context {model.config.context}"
        )

    table = model.embedding_table
    rng = make_rng(cfg.sampler.seed)
    state = model.new_state()

    t0 = time.perf_counter()
    logits = None
    for token in prompt:
        logits = model.forward_step(state, lookup(table, token))
    prefill_seconds = time.perf_counter() - t0

    matrix = table.matrix
    log_vocab = np.log(vocab)
    tokens: list[int] = []
    records: list[StepRecord] = []
    t1 = time.perf_counter()
    for step in range(cfg.max_tokens):
        dense = apply_temperature(logits, cfg.sampler.temperature)
        trunc = top_p_truncate(dense, cfg.sampler.top_p)
        pos = sample_position(trunc, rng)
        token = int(trunc.ids[pos])

        if cfg.prior_source == "sampled_dist":
            ids, probs = trunc.ids, trunc.probs
        else:
            ids, probs = np.arange(vocab, dtype=np.int64), dense
            pos = token
        nz = probs[probs > 0.0]
        entropy = min(1.0, max(0.0, -float(np.sum(nz * np.log(nz))) / log_vocab))
        weights, applied_mode = _step_weights(cfg, probs, pos, token, entropy)

        tokens.append(token)
        records.append(
            StepRecord(
                step=step,
                token=token,
                entropy=entropy,
                support=ids.copy(),
                probs=probs.copy(),
                weights=weights,
                mode=applied_mode,
            )
        )
        if token in cfg.stop_tokens or step == cfg.max_tokens - 1:
            break
        if applied_mode == "standard":
            fed = matrix[token].copy()
        else:
            order = np.argsort(ids, kind="stable")
            fed = kernels.mix_rows(matrix, ids[order], weights[order]).astype(np.float32)
        logits = model.forward_step(state, fed)
    decode_seconds = time.perf_counter() - t1

    return GenerationResult(
        tokens=tokens,
        records=records,
        prefill_seconds=prefill_seconds,
        decode_seconds=decode_seconds,
        prompt_tokens=len(prompt),
    )


# ---------------------------------------------------------------------------
# Trace JSONL
# ---------------------------------------------------------------------------


def _record_to_json(rec: StepRecord) -> str:
    return json.dumps(
        {
            "step": rec.step,
            "token": rec.token,
            "H": rec.entropy,
            "support": [int(i) for i in rec.support],
            "probs": [float(p) for p in rec.probs],
            "weights": [float(w) for w in rec.weights],
            "mode": rec.mode,
        }
    )


def write_trace(result: GenerationResult, path: str | Path) -> None:
    """One StepRecord per line; floats keep full round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in result.records:
            fh.write(_record_to_json(rec))
            fh.write("\n")


def read_trace(path: str | Path) -> list[StepRecord]:
    records: list[StepRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {lineno}: invalid JSON: {exc}") from exc
            try:
                support = np.asarray(obj["support"], dtype=np.int64)
                probs = np.asarray(obj["probs"], dtype=np.float64)
                weights = np.asarray(obj["weights"], dtype=np.float64)
                rec = StepRecord(
                    step=int(obj["step"]),
                    token=int(obj["token"]),
                    entropy=float(obj["H"]),
                    support=support,
                    probs=probs,
                    weights=weights,
                    mode=str(obj["mode"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"line {lineno}: bad record: {exc}") from exc
            if rec.mode not in mix_core.MODES:
                raise TraceFormatError(f"line {lineno}: unknown mode {rec.mode!r}")
            if probs.shape != support.shape or weights.shape != support.shape:
                raise TraceFormatError(f"line {lineno}: probs/weights not aligned with support")
            if not (0.0 <= rec.entropy <= 1.0):
                raise TraceFormatError(f"line {lineno}: H={rec.entropy} outside [0, 1]")
            if np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
                raise TraceFormatError(f"line {lineno}: weights must be finite and non-negative")
            records.append(rec)
    return records


def replay_verify(
    trace: list[StepRecord],
    cfg: GenConfig,
    vocab_size: int = 256,
    tolerance: float = 1e-9,
) -> ReplayReport:
    """Recompute entropy and weights from each recorded distribution.

    The recorded `mode` must match `cfg.mix.mode`, except that "standard"
    records are always admissible (stop/special passthrough steps).  The
    trace schema does not carry the vocabulary size, so the entropy
    normalizer's `vocab_size` is a parameter here.
    """
    max_h = 0.0
    max_w = 0.0
    first_bad: int | None = None
    for rec in trace:
        if rec.mode != cfg.mix.mode and rec.mode != "standard":
            raise ValueError(
                f"step {rec.step}: trace mode {rec.mode!r} incompatible with config mode {cfg.mix.mode!r}"
            )
        h = mix_core.normalized_entropy(rec.probs, vocab_size)
        if rec.mode == "standard":
            expected = mix_core.one_hot_weights(rec.token, vocab_size).to_dense(vocab_size)
        elif rec.mode == "direct_mixture":
            expected = mix_core.direct_mix_weights(rec.support, rec.probs).to_dense(vocab_size)
        else:
            expected = mix_core.posterior_mix_weights(
                rec.support, rec.probs, rec.token, cfg.mix.beta, vocab_size
            ).to_dense(vocab_size)
        got = np.zeros(vocab_size, dtype=np.float64)
        got[rec.support] = rec.weights
        h_dev = abs(h - rec.entropy)
        w_dev = float(np.max(np.abs(expected - got)))
        max_h = max(max_h, h_dev)
        max_w = max(max_w, w_dev)
        if (h_dev > tolerance or w_dev > tolerance) and first_bad is None:
            first_bad = rec.step
    return ReplayReport(
        passed=first_bad is None,
        steps=len(trace),
        max_entropy_dev=max_h,
        max_weight_dev=max_w,
        first_failed_step=first_bad,
    )
