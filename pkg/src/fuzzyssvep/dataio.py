"""Binary file formats: SSVP datasets and IFZT model checkpoints.

Both formats are little-endian throughout. Malformed input raises
FormatError with the byte offset where parsing failed, so corrupt files
can be diagnosed with a hex dump.

SSVP layout:
    magic "SSVP" | u16 version=1 | u32 n_subjects | u32 trials_per_subject
    | u32 n_channels | u32 n_samples | u32 n_classes | f32 fs
    | n_classes*f32 frequencies | n_classes*f32 phases
    | per channel: u16 name length + UTF-8 name
    | per trial (subject-major): u16 label + n_channels*n_samples f32,
      channel-major.

IFZT layout:
    magic "IFZT" | u16 version=1
    | u32 C, S, M, R, H | f32 dropout | u8 consequent_mode
    | u8 filter_order | u8 feature_mode
    | repeated tensors: u16 name length, UTF-8 name, u8 rank,
      rank*u32 dims, f64 data row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .signals import EpochedDataset, StimulusConfig, SubjectData, Trial

SSVP_MAGIC = b"SSVP"
IFZT_MAGIC = b"IFZT"
FORMAT_VERSION = 1


class _Cursor:
    """Sequential reader over a byte buffer that reports offsets on failure."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"{self.path}: truncated at byte {self.offset} while reading {what} "
                f"({n} bytes needed, {len(self.data) - self.offset} left)"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dtype = np.dtype(dtype).newbyteorder("<")
        raw = self.take(dtype.itemsize * count, what)
        return np.frombuffer(raw, dtype=dtype, count=count)

    def done(self):
        if self.offset != len(self.data):
            raise FormatError(
                f"{self.path}: {len(self.data) - self.offset} trailing bytes "
                f"at byte {self.offset}"
            )


def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ConfigError(f"name too long to serialize: {name[:40]}...")
    return struct.pack("<H", len(raw)) + raw


def _read_name(cur: _Cursor, what: str) -> str:
    (n,) = cur.unpack("H", f"{what} length")
    try:
        return cur.take(n, what).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{cur.path}: invalid UTF-8 in {what} at byte {cur.offset}") from exc


def write_dataset(dataset: EpochedDataset, path: str | Path) -> None:
    """Serialize a dataset to the SSVP format.

    The format stores a rectangular layout, so every subject must hold the
    same number of trials. Signals are stored as float32; synthetic data is
    already float32 so this is lossless for it.
    """
    counts = {len(s.trials) for s in dataset.subjects}
    if len(counts) != 1:
        raise ConfigError(f"subjects have unequal trial counts {sorted(counts)}")
    trials_per_subject = counts.pop()
    c, s_total = dataset.n_channels, dataset.n_samples
    m = dataset.n_classes
    out = bytearray()
    out += SSVP_MAGIC
    out += struct.pack(
        "<H5If", FORMAT_VERSION, dataset.n_subjects, trials_per_subject, c, s_total, m, dataset.fs
    )
    out += np.asarray(dataset.stimulus.frequencies, dtype="<f4").tobytes()
    out += np.asarray(dataset.stimulus.phases, dtype="<f4").tobytes()
    for name in dataset.channel_names:
        out += _pack_name(name)
    for subj in dataset.subjects:
        for trial in subj.trials:
            out += struct.pack("<H", trial.label)
            out += np.ascontiguousarray(trial.signal, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def read_dataset(path: str | Path) -> EpochedDataset:
    """Parse an SSVP file.

    The format does not carry harmonic-response or subject-model metadata,
    so the returned stimulus uses a single fundamental harmonic and the
    subjects carry no forward model. Training and evaluation only need the
    stored trials and the frequency table.
    """
    path = Path(path)
    cur = _Cursor(path.read_bytes(), str(path))
    magic = cur.take(4, "magic")
    if magic != SSVP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0, expected {SSVP_MAGIC!r}")
    (version,) = cur.unpack("H", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    n_subjects, trials_per_subject, c, s_total, m = cur.unpack("5I", "header counts")
    if min(n_subjects, trials_per_subject, c, s_total, m) < 1:
        raise FormatError(f"{path}: zero count in header {(n_subjects, trials_per_subject, c, s_total, m)}")
    (fs,) = cur.unpack("f", "fs")
    freqs = cur.array("f4", m, "frequencies").astype(np.float64)
    phases = cur.array("f4", m, "phases").astype(np.float64)
    channel_names = [_read_name(cur, f"channel name {i}") for i in range(c)]
    subjects = []
    for _ in range(n_subjects):
        trials = []
        for _ in range(trials_per_subject):
            (label,) = cur.unpack("H", "trial label")
            if label >= m:
                raise FormatError(
                    f"{path}: label {label} out of range [0, {m}) at byte {cur.offset - 2}"
                )
            samples = cur.array("f4", c * s_total, "trial samples")
            trials.append(Trial(signal=samples.reshape(c, s_total).copy(), label=int(label)))
        subjects.append(SubjectData(trials=trials, model=None))
    cur.done()
    stimulus = StimulusConfig(
        frequencies=tuple(freqs), phases=tuple(phases),
        n_harmonics=1, harmonic_amplitudes=(1.0,), harmonic_phases=(0.0,),
    )
    return EpochedDataset(
        subjects=subjects, fs=float(fs), stimulus=stimulus, channel_names=channel_names
    )


@dataclass(frozen=True)
class CheckpointHeader:
    """Architecture block stored ahead of the tensors in an IFZT file.

    Enum fields are stored as u8: consequent_mode 0=zero_order,
    1=first_order; filter_order 0=spatial_first, 1=temporal_first,
    2=spatial_only, 3=temporal_only; feature_mode 0=time_domain, 1=fft.
    """

    n_channels: int
    n_samples: int
    n_classes: int
    n_rules: int
    hidden: int
    dropout: float
    consequent_mode: int
    filter_order: int
    feature_mode: int

    def __post_init__(self):
        if min(self.n_channels, self.n_samples, self.n_classes, self.n_rules, self.hidden) < 1:
            raise ConfigError(f"checkpoint header has nonpositive dimension: {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.consequent_mode not in (0, 1):
            raise ConfigError(f"unknown consequent_mode code {self.consequent_mode}")
        if self.filter_order not in (0, 1, 2, 3):
            raise ConfigError(f"unknown filter_order code {self.filter_order}")
        if self.feature_mode not in (0, 1):
            raise ConfigError(f"unknown feature_mode code {self.feature_mode}")


def write_checkpoint_raw(
    path: str | Path, header: CheckpointHeader, tensors: dict[str, np.ndarray]
) -> None:
    """Write header plus named float64 tensors. Names are written sorted so
    identical parameter sets produce identical bytes regardless of dict order."""
    out = bytearray()
    out += IFZT_MAGIC
    out += struct.pack(
        "<H5If3B",
        FORMAT_VERSION,
        header.n_channels, header.n_samples, header.n_classes,
        header.n_rules, header.hidden,
        header.dropout,
        header.consequent_mode, header.filter_order, header.feature_mode,
    )
    for name in sorted(tensors):
        # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d,
        # and tobytes() already emits C order.
        arr = np.asarray(tensors[name], dtype="<f8")
        if arr.ndim > 255:
            raise ConfigError(f"tensor {name} rank {arr.ndim} exceeds format limit")
        out += _pack_name(name)
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def read_checkpoint_raw(path: str | Path) -> tuple[CheckpointHeader, dict[str, np.ndarray]]:
    """Parse an IFZT file into its header and named tensors."""
    path = Path(path)
    cur = _Cursor(path.read_bytes(), str(path))
    magic = cur.take(4, "magic")
    if magic != IFZT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0, expected {IFZT_MAGIC!r}")
    (version,) = cur.unpack("H", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    c, s, m, r, h = cur.unpack("5I", "architecture dims")
    (dropout,) = cur.unpack("f", "dropout")
    cm, fo, fm = cur.unpack("3B", "mode codes")
    try:
        header = CheckpointHeader(
            n_channels=c, n_samples=s, n_classes=m, n_rules=r, hidden=h,
            dropout=float(dropout), consequent_mode=cm, filter_order=fo, feature_mode=fm,
        )
    except ConfigError as exc:
        raise FormatError(f"{path}: invalid header: {exc}") from exc
    tensors: dict[str, np.ndarray] = {}
    while cur.offset < len(cur.data):
        name = _read_name(cur, "tensor name")
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor {name!r} at byte {cur.offset}")
        (rank,) = cur.unpack("B", f"rank of {name}")
        dims = cur.unpack(f"{rank}I", f"dims of {name}") if rank else ()
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = cur.array("f8", count, f"data of {name}")
        tensors[name] = data.reshape(dims).copy()
    return header, tensors
