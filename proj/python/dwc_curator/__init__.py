"""Python bindings for the DWC curation pipeline.

Structured values (reports, counts, plans, contexts) are returned as plain
dicts; token strings are bytes because byte-level tokens need not be UTF-8.
"""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    Encoder,
    Error,
    MinHasher,
    ParseError,
    PipelineError,
    ValidationError,
    Vocabulary,
    apportion,
    best_fit_assign,
    canonicalize_url,
    detect_language,
    merge_vocab,
    train_bpe,
    LEARNED_VOCAB_SIZE,
    MERGED_VOCAB_SIZE,
    QWEN_BASE_VOCAB_SIZE,
)

__all__ = [
    "ConfigError", "Encoder", "Error", "MinHasher", "ParseError", "PipelineError", "ValidationError",
    "Vocabulary", "apportion", "best_fit_assign", "build_stage_plan", "canonicalize_url", "clean_text",
    "compose_training_text", "dedup", "detect_language", "merge_vocab", "pack", "parse_context",
    "render_report", "run_pipeline", "sample_stage", "serialize_context", "train_bpe",
    "LEARNED_VOCAB_SIZE", "MERGED_VOCAB_SIZE", "QWEN_BASE_VOCAB_SIZE",
]


def clean_text(text, **options):
    """General cleaning; returns (text, edit counts per option)."""
    cleaned, counts = _core.clean_text(text, _json.dumps(options))
    return cleaned, _json.loads(counts)


def serialize_context(context):
    return _core.serialize_context(_json.dumps(context))


def parse_context(preamble):
    return _json.loads(_core.parse_context(preamble))


def compose_training_text(document, mode="preamble"):
    return _core.compose_training_text(_json.dumps(document), mode)


def dedup(documents, levels=("url", "exact", "near"), hasher=None, workers=1):
    """Documents are dicts with at least id and text (url optional)."""
    lines = []
    for d in documents:
        d = dict(d)
        d.setdefault("provenance", {"source_path": "", "record_index": 0})
        lines.append(_json.dumps(d))
    return _json.loads(_core.dedup(lines, list(levels), hasher or MinHasher(), workers))


def pack(documents, length, order="size_desc", pad_id=0):
    """documents: iterable of (id, token ids). Returns (sequences, stats)."""
    seqs, stats = _core.pack([(i, list(t)) for i, t in documents], length, order, pad_id)
    return seqs, _json.loads(stats)


def build_stage_plan(config):
    return _json.loads(_core.build_stage_plan(_json.dumps(config)))


def sample_stage(plan, stage, pool, seed):
    """pool: iterable of (doc_id, domain, tokens). Returns (doc ids, summary)."""
    ids, summary = _core.sample_stage(_json.dumps(plan), stage, list(pool), seed)
    return ids, _json.loads(summary)


def run_pipeline(config_path, workers=None, keep_intermediate=None, output_dir=None):
    return _json.loads(_core.run_pipeline(str(config_path), workers, keep_intermediate,
                                          None if output_dir is None else str(output_dir)))


def render_report(report):
    return _core.render_report(_json.dumps(report))
