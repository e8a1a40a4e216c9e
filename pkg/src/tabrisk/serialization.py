"""Versioned JSON model files with a content checksum.

A file looks like::

    {
      "format": "tabrisk-model",
      "version": 1,
      "kind": "tabtransformer",
      "schema_fingerprint": "3f2a...",
      "checksum": "<sha256 of the canonical payload>",
      "payload": {...}
    }

Floats are written with their shortest round-trip representation, so a
loaded model reproduces the saved one bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .classical import model_from_dict
from .data import ScalerParams, Schema
from .nomogram import NomogramSpec
from .tabtransformer import TabTransformer
from .textio import write_text

FORMAT = "tabrisk-model"
VERSION = 1


class SerializationError(ValueError):
    """Unreadable, tampered, wrong-version or wrong-schema model file."""


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def checksum(payload) -> str:
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


def _kind_of(obj) -> str:
    if isinstance(obj, TabTransformer):
        return "tabtransformer"
    if isinstance(obj, NomogramSpec):
        return "nomogram"
    if isinstance(obj, ScalerParams):
        return "scaler"
    if hasattr(obj, "to_dict") and hasattr(obj, "predict_proba"):
        return "classifier"
    raise TypeError(f"cannot persist objects of type {type(obj).__name__}")


def to_document(obj, schema: Schema | None = None, kind: str | None = None) -> dict:
    """Wrap ``obj`` (or an already-built payload dict when ``kind`` is given)."""
    if kind is None:
        kind = _kind_of(obj)
        payload = obj.to_dict()
    else:
        payload = obj
    payload = json.loads(_canonical(payload))  # normalise tuples, numpy scalars rejected early
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "schema_fingerprint": schema.fingerprint() if schema is not None else None,
        "checksum": checksum(payload),
        "payload": payload,
    }


def save(path: str | Path, obj, schema: Schema | None = None, kind: str | None = None) -> Path:
    doc = to_document(obj, schema, kind)
    return write_text(path, json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


def read_document(path: str | Path, schema: Schema | None = None, kind: str | None = None) -> dict:
    """Parse and verify a model file; returns the document."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise SerializationError(f"{path}: not a readable model file ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise SerializationError(f"{path}: not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise SerializationError(f"{path}: format version {doc.get('version')} is not supported (expected {VERSION})")
    if checksum(doc.get("payload")) != doc.get("checksum"):
        raise SerializationError(f"{path}: checksum mismatch, the file was modified after saving")
    if kind is not None and doc.get("kind") != kind:
        raise SerializationError(f"{path}: holds a {doc.get('kind')!r}, expected {kind!r}")
    if schema is not None and doc.get("schema_fingerprint") not in (None, schema.fingerprint()):
        raise SerializationError(f"{path}: schema fingerprint {doc['schema_fingerprint']} does not match "
                                 f"the data schema {schema.fingerprint()}")
    return doc


def from_document(doc: dict):
    kind, payload = doc["kind"], doc["payload"]
    if kind == "tabtransformer":
        return TabTransformer.from_dict(payload)
    if kind == "nomogram":
        return NomogramSpec.from_dict(payload)
    if kind == "scaler":
        return ScalerParams.from_dict(payload)
    if kind == "classifier":
        return model_from_dict(payload)
    return payload


def load(path: str | Path, schema: Schema | None = None, kind: str | None = None):
    return from_document(read_document(path, schema, kind))


__all__ = ["FORMAT", "VERSION", "SerializationError", "checksum", "from_document", "load", "read_document",
           "save", "to_document"]
