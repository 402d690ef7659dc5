"""Binary codebook of synthesized schedules keyed by steering angle.

Layout (little-endian throughout):

    offset  size  field
    0       8     magic "TMEMSCB1"
    8       2     format version (u16, currently 1)
    10      2     control-mode code (u16)
    12      2     surface rows (u16)
    14      2     surface cols (u16)
    16      4     record count (u32)
    20      8     master seed (u64)
    28      8     modulation period in seconds (f64)
    36      8     carrier frequency in Hz (f64)
    44      32    scenario digest (SHA-256)
    76      ...   records, sorted by angle

Each record is: steering angle in millidegrees (i32), pair count (u32),
achieved cost (f64), then pair count x (rise f64, duty f64). Full-surface
modes store rows x cols pairs in row-major order; column-wise modes store one
pair per row. The digest binds the file to the exact scenario it was built
for; a mismatch on load is an error, never a silent fallback.
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import EmsGeometry
from .modulation import ControlMode, PulseSchedule

MAGIC = b"TMEMSCB1"
FORMAT_VERSION = 1

_MODE_CODES = {
    ControlMode.FULL: 0,
    ControlMode.DELTA: 1,
    ControlMode.COLWISE: 2,
    ControlMode.COLWISE_DELTA: 3,
}
_CODE_MODES = {v: k for k, v in _MODE_CODES.items()}

_HEADER = struct.Struct("<8sHHHHIQdd32s")
_RECORD_HEAD = struct.Struct("<iId")


class CodebookError(ValueError):
    """Raised for malformed, truncated, or stale codebook files."""


def scenario_digest(payload: dict) -> bytes:
    """SHA-256 of a canonical JSON rendering of the scenario parameters."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).digest()


def pairs_per_record(mode: ControlMode, rows: int, cols: int) -> int:
    if mode in (ControlMode.COLWISE, ControlMode.COLWISE_DELTA):
        return rows
    return rows * cols


@dataclass(frozen=True)
class CodebookEntry:
    angle_mdeg: int
    phi: float
    rise: np.ndarray
    duty: np.ndarray

    @property
    def angle_deg(self) -> float:
        return self.angle_mdeg / 1000.0

    def schedule(self, geometry: EmsGeometry, mode: ControlMode,
                 period_s: float) -> PulseSchedule:
        """Expand the stored pairs back into a full per-cell schedule."""
        p, q = geometry.rows, geometry.cols
        if self.rise.size != pairs_per_record(mode, p, q):
            raise CodebookError("entry size does not match the geometry and mode")
        if mode in (ControlMode.COLWISE, ControlMode.COLWISE_DELTA):
            rise = np.repeat(self.rise[:, None], q, axis=1)
            duty = np.repeat(self.duty[:, None], q, axis=1)
        else:
            rise = self.rise.reshape(p, q)
            duty = self.duty.reshape(p, q)
        return PulseSchedule(period_s=period_s, rise=rise, duty=duty)


@dataclass(frozen=True)
class Codebook:
    mode: ControlMode
    rows: int
    cols: int
    seed: int
    period_s: float
    f0_hz: float
    digest: bytes
    entries: tuple

    def angles_deg(self) -> list:
        return [e.angle_deg for e in self.entries]

    def entry_for(self, angle_deg: float) -> Optional[CodebookEntry]:
        target = _angle_mdeg(angle_deg)
        for e in self.entries:
            if e.angle_mdeg == target:
                return e
        return None


def _angle_mdeg(angle_deg: float) -> int:
    return int(round(float(angle_deg) * 1000.0))


def entry_from_schedule(angle_deg: float, phi: float, schedule: PulseSchedule,
                        mode: ControlMode) -> CodebookEntry:
    """Compress a schedule to its mode-native pair list."""
    if mode in (ControlMode.COLWISE, ControlMode.COLWISE_DELTA):
        rise = schedule.rise[:, 0].copy()
        duty = schedule.duty[:, 0].copy()
        if not (np.array_equal(schedule.rise, np.repeat(rise[:, None], schedule.shape[1], axis=1))
                and np.array_equal(schedule.duty, np.repeat(duty[:, None], schedule.shape[1], axis=1))):
            raise ValueError("schedule is not column-wise; refusing lossy storage")
    else:
        rise = schedule.rise.reshape(-1).copy()
        duty = schedule.duty.reshape(-1).copy()
    rise.setflags(write=False)
    duty.setflags(write=False)
    return CodebookEntry(angle_mdeg=_angle_mdeg(angle_deg), phi=float(phi),
                         rise=rise, duty=duty)


def write_codebook(path, book: Codebook) -> None:
    if len(book.digest) != 32:
        raise ValueError("digest must be 32 bytes")
    if book.mode not in _MODE_CODES:
        raise ValueError(f"unknown control mode {book.mode!r}")
    n_pairs = pairs_per_record(book.mode, book.rows, book.cols)
    entries = sorted(book.entries, key=lambda e: e.angle_mdeg)
    for a, b in zip(entries, entries[1:]):
        if a.angle_mdeg == b.angle_mdeg:
            raise ValueError(f"duplicate angle {a.angle_deg} deg")
    blob = bytearray()
    blob += _HEADER.pack(MAGIC, FORMAT_VERSION, _MODE_CODES[book.mode],
                         book.rows, book.cols, len(entries), book.seed,
                         book.period_s, book.f0_hz, book.digest)
    for e in entries:
        if e.rise.shape != (n_pairs,) or e.duty.shape != (n_pairs,):
            raise ValueError("entry size does not match the header geometry")
        blob += _RECORD_HEAD.pack(e.angle_mdeg, n_pairs, e.phi)
        blob += np.column_stack([e.rise, e.duty]).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def read_codebook(path, expected_digest: Optional[bytes] = None) -> Codebook:
    """Load and validate a codebook; digest mismatches raise CodebookError."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise CodebookError("file too short for a codebook header")
    magic, version, mode_code, rows, cols, count, seed, period_s, f0_hz, digest = (
        _HEADER.unpack_from(blob, 0))
    if magic != MAGIC:
        raise CodebookError("bad magic; not a codebook file")
    if version != FORMAT_VERSION:
        raise CodebookError(f"unsupported codebook version {version}")
    if mode_code not in _CODE_MODES:
        raise CodebookError(f"unknown control-mode code {mode_code}")
    mode = _CODE_MODES[mode_code]
    if rows < 1 or cols < 1:
        raise CodebookError("header declares an empty surface")
    if expected_digest is not None and digest != expected_digest:
        raise CodebookError(
            "scenario digest mismatch; the codebook was built for different parameters")
    n_pairs = pairs_per_record(mode, rows, cols)
    rec_size = _RECORD_HEAD.size + 16 * n_pairs
    if len(blob) != _HEADER.size + count * rec_size:
        raise CodebookError("file length does not match the declared record count")
    entries = []
    off = _HEADER.size
    prev = None
    for _ in range(count):
        angle_mdeg, got_pairs, phi = _RECORD_HEAD.unpack_from(blob, off)
        off += _RECORD_HEAD.size
        if got_pairs != n_pairs:
            raise CodebookError("record pair count disagrees with the header")
        pairs = np.frombuffer(blob, dtype="<f8", count=2 * n_pairs, offset=off)
        off += 16 * n_pairs
        pairs = pairs.reshape(n_pairs, 2).astype(float)
        rise, duty = pairs[:, 0].copy(), pairs[:, 1].copy()
        if np.any(rise < 0.0) or np.any(rise >= 1.0) or np.any(duty < 0.0) or np.any(duty > 1.0):
            raise CodebookError("record holds out-of-range rise or duty values")
        if not (np.isfinite(phi) and phi >= 0.0):
            raise CodebookError("record holds an invalid cost value")
        if prev is not None and angle_mdeg <= prev:
            raise CodebookError("records are not sorted by strictly increasing angle")
        prev = angle_mdeg
        rise.setflags(write=False)
        duty.setflags(write=False)
        entries.append(CodebookEntry(angle_mdeg=angle_mdeg, phi=phi, rise=rise, duty=duty))
    return Codebook(mode=mode, rows=rows, cols=cols, seed=seed, period_s=period_s,
                    f0_hz=f0_hz, digest=digest, entries=tuple(entries))
