"""Append-only local diagnosis store.

Log layout (`diagnoses.log`), integers little-endian:

    file header   4 bytes magic b"CDLG", u8 version, u8 flags
                  (flags bit 0 is reserved for a future encrypted variant)
    record        u16 sync marker 0xD1A6
                  u32 payload length
                  payload: diagnosis JSON, UTF-8
                  u32 CRC-32 of the payload

A corrupt record is skipped with a warning: the reader rescans for the
next sync marker, so one bad record never hides the rest of the log.
A sidecar JSON index (`diagnoses.idx.json`) maps id -> byte offset for
external tools; the log itself stays authoritative and the index is
rebuilt from it on open.

Writes serialize through a lock, append + fsync before the index is
touched, and readers see either the whole record or none of it.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import threading
import zlib
from pathlib import Path

from .cascade import Diagnosis
from .errors import NotFoundError

log = logging.getLogger(__name__)

MAGIC = b"CDLG"
VERSION = 1
FLAGS = 0
SYNC = b"\xd1\xa6"
HEADER = MAGIC + bytes([VERSION, FLAGS])

LOG_NAME = "diagnoses.log"
INDEX_NAME = "diagnoses.idx.json"


class DiagnosisStore:
    def __init__(self, directory) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.log_path = self.directory / LOG_NAME
        self.index_path = self.directory / INDEX_NAME
        self._lock = threading.Lock()
        # id -> (timestamp, id, offset); sort key newest-first is (ts, id) desc
        self._index: dict[str, tuple[str, str, int]] = {}
        if not self.log_path.exists():
            with open(self.log_path, "wb") as fh:
                fh.write(HEADER)
                fh.flush()
                os.fsync(fh.fileno())
        self._replay()

    def _replay(self) -> None:
        blob = self.log_path.read_bytes()
        if blob[:4] != MAGIC:
            raise NotFoundError(f"{self.log_path} is not a diagnosis log")
        pos = len(HEADER)
        self._index.clear()
        while pos < len(blob):
            record, next_pos = self._read_record(blob, pos)
            if record is None:
                resync = blob.find(SYNC, pos + 1)
                log.warning("skipping corrupt record at offset %d in %s", pos, self.log_path)
                if resync == -1:
                    break
                pos = resync
                continue
            diagnosis_id, timestamp = record
            self._index[diagnosis_id] = (timestamp, diagnosis_id, pos)
            pos = next_pos
        self._write_index()

    @staticmethod
    def _read_record(blob: bytes, pos: int):
        """(id, timestamp) and the next offset, or (None, pos) if corrupt."""
        if pos + 6 > len(blob) or blob[pos : pos + 2] != SYNC:
            return None, pos
        (length,) = struct.unpack_from("<I", blob, pos + 2)
        end = pos + 6 + length + 4
        if length > len(blob) or end > len(blob):
            return None, pos
        payload = blob[pos + 6 : pos + 6 + length]
        (crc,) = struct.unpack_from("<I", blob, pos + 6 + length)
        if zlib.crc32(payload) != crc:
            return None, pos
        try:
            raw = json.loads(payload.decode("utf-8"))
            return (raw["id"], raw["timestamp"]), end
        except (ValueError, KeyError):
            return None, pos

    def _load_record(self, offset: int) -> Diagnosis:
        with open(self.log_path, "rb") as fh:
            fh.seek(offset)
            head = fh.read(6)
            (length,) = struct.unpack_from("<I", head, 2)
            payload = fh.read(length)
        return Diagnosis.from_dict(json.loads(payload.decode("utf-8")))

    def _write_index(self) -> None:
        tmp = self.index_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({k: v[2] for k, v in self._index.items()}, fh)
        os.replace(tmp, self.index_path)

    def put(self, diagnosis: Diagnosis) -> str:
        """Append durably; the diagnosis is on disk before this returns."""
        payload = json.dumps(diagnosis.to_dict(), sort_keys=True).encode("utf-8")
        frame = SYNC + struct.pack("<I", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))
        with self._lock:
            with open(self.log_path, "ab") as fh:
                fh.seek(0, os.SEEK_END)
                offset = fh.tell()
                fh.write(frame)
                fh.flush()
                os.fsync(fh.fileno())
            self._index[diagnosis.id] = (diagnosis.timestamp, diagnosis.id, offset)
            self._write_index()
        return diagnosis.id

    def get(self, diagnosis_id: str) -> Diagnosis:
        with self._lock:
            entry = self._index.get(diagnosis_id)
        if entry is None:
            raise NotFoundError(f"no diagnosis with id {diagnosis_id!r}")
        return self._load_record(entry[2])

    def list(self, limit: int = 20, before: str | None = None) -> list:
        """Newest-first page; `before` is the id of the last item of the
        previous page (exclusive cursor)."""
        limit = max(0, int(limit))
        with self._lock:
            ordered = sorted(self._index.values(), key=lambda t: (t[0], t[1]), reverse=True)
            if before is not None:
                if before not in self._index:
                    raise NotFoundError(f"unknown cursor id {before!r}")
                cursor = self._index[before]
                key = (cursor[0], cursor[1])
                ordered = [t for t in ordered if (t[0], t[1]) < key]
            page = ordered[:limit]
        return [self._load_record(off) for _, _, off in page]

    def count(self) -> int:
        with self._lock:
            return len(self._index)
