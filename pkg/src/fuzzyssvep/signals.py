"""SSVEP signal synthesis, filtering, spectral features, and windowing.

Synthetic trials follow the standard flicker-response model: the stimulus
chrominance is modulated sinusoidally at the class frequency, and the
recorded response is a sum of harmonics of that frequency, mixed into
channels by a per-subject mixing matrix and corrupted by additive noise
at a configured SNR.

All functions are pure; RNG state is derived from explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import ConfigError

# Default montage for 8-channel occipital recordings.
OCCIPITAL_8 = ("PZ", "PO5", "PO3", "POz", "PO4", "PO6", "O1", "O2")


@dataclass(frozen=True)
class StimulusConfig:
    """Stimulus frequency table and harmonic response shape.

    Attributes:
        frequencies: one stimulus frequency per class, Hz.
        phases: one phase offset per class, radians.
        n_harmonics: number of response harmonics k = 1..n.
        harmonic_amplitudes: response amplitude per harmonic (A_1 > 0).
        harmonic_phases: response phase per harmonic, radians.
    """

    frequencies: tuple[float, ...]
    phases: tuple[float, ...]
    n_harmonics: int = 1
    harmonic_amplitudes: tuple[float, ...] = (1.0,)
    harmonic_phases: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "frequencies", tuple(float(f) for f in self.frequencies))
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        object.__setattr__(self, "harmonic_amplitudes", tuple(float(a) for a in self.harmonic_amplitudes))
        object.__setattr__(self, "harmonic_phases", tuple(float(p) for p in self.harmonic_phases))
        if not self.frequencies:
            raise ConfigError("at least one stimulus frequency required")
        if any(f <= 0 for f in self.frequencies):
            raise ConfigError(f"frequencies must be strictly positive, got {self.frequencies}")
        if len(set(self.frequencies)) != len(self.frequencies):
            raise ConfigError(f"frequencies must be pairwise distinct, got {self.frequencies}")
        if len(self.phases) != len(self.frequencies):
            raise ConfigError(
                f"phases length {len(self.phases)} != frequencies length {len(self.frequencies)}"
            )
        if self.n_harmonics < 1:
            raise ConfigError(f"n_harmonics must be >= 1, got {self.n_harmonics}")
        if len(self.harmonic_amplitudes) != self.n_harmonics:
            raise ConfigError("harmonic_amplitudes must have length n_harmonics")
        if len(self.harmonic_phases) != self.n_harmonics:
            raise ConfigError("harmonic_phases must have length n_harmonics")
        if any(a < 0 for a in self.harmonic_amplitudes):
            raise ConfigError("harmonic amplitudes must be nonnegative")
        if self.harmonic_amplitudes[0] <= 0:
            raise ConfigError("fundamental amplitude A_1 must be positive")

    @property
    def n_classes(self) -> int:
        return len(self.frequencies)


@dataclass
class SubjectModel:
    """Per-subject forward model: channel mixing, phase jitter, noise level.

    mixing has shape (n_channels, n_harmonics); row c projects the harmonic
    sources onto channel c. phase_jitter (radians, one per harmonic) models
    subject-specific response latency. rng_seed drives the noise draw only,
    so trials of one subject share mixing/jitter but differ in noise.
    """

    mixing: np.ndarray
    noise_snr_db: float
    rng_seed: int
    phase_jitter: np.ndarray | None = None
    pink_noise: bool = False

    def __post_init__(self):
        self.mixing = np.asarray(self.mixing, dtype=np.float64)
        if self.mixing.ndim != 2:
            raise ConfigError(f"mixing must be 2-D, got shape {self.mixing.shape}")
        if np.any(np.all(self.mixing == 0.0, axis=1)):
            raise ConfigError("mixing must have no all-zero row")
        if not np.isfinite(self.noise_snr_db) and not np.isposinf(self.noise_snr_db):
            raise ConfigError(f"noise_snr_db must be finite or +inf, got {self.noise_snr_db}")
        if self.phase_jitter is None:
            self.phase_jitter = np.zeros(self.mixing.shape[1])
        self.phase_jitter = np.asarray(self.phase_jitter, dtype=np.float64)
        if self.phase_jitter.shape != (self.mixing.shape[1],):
            raise ConfigError("phase_jitter must have one entry per harmonic source")


def sample_subject(
    cfg: StimulusConfig,
    n_channels: int,
    noise_snr_db: float,
    seed,
    jitter_range: float = np.pi / 4,
    pink_noise: bool = False,
) -> SubjectModel:
    """Draw a random subject: row-normalized normal mixing plus phase jitter.

    The mixing rows are unit-norm so every channel carries comparable signal
    power; jitter is uniform in [-jitter_range, +jitter_range] per harmonic.
    """
    rng = np.random.default_rng(seed)
    mixing = rng.standard_normal((n_channels, cfg.n_harmonics))
    norms = np.linalg.norm(mixing, axis=1, keepdims=True)
    # A zero row has probability zero; resample defensively anyway.
    while np.any(norms == 0.0):
        mixing = rng.standard_normal((n_channels, cfg.n_harmonics))
        norms = np.linalg.norm(mixing, axis=1, keepdims=True)
    mixing /= norms
    jitter = rng.uniform(-jitter_range, jitter_range, size=cfg.n_harmonics)
    noise_seed = int(rng.integers(0, 2**63 - 1))
    return SubjectModel(
        mixing=mixing,
        noise_snr_db=noise_snr_db,
        rng_seed=noise_seed,
        phase_jitter=jitter,
        pink_noise=pink_noise,
    )


def stimulus_chrominance(cfg: StimulusConfig, class_idx: int, t: float) -> np.ndarray:
    """RGB chrominance of the flicker for one class at time t (seconds).

    Each component is 255 * (1 + sin(2*pi*f*t + phase)) / 2, so the value
    oscillates between 0 and 255 around the midpoint 127.5.
    """
    if not 0 <= class_idx < cfg.n_classes:
        raise IndexError(f"class_idx {class_idx} out of range [0, {cfg.n_classes})")
    f = cfg.frequencies[class_idx]
    phi = cfg.phases[class_idx]
    level = 255.0 * (1.0 + np.sin(2.0 * np.pi * f * t + phi)) / 2.0
    return np.full(3, level, dtype=np.float64)


def _harmonic_sources(cfg: StimulusConfig, subject: SubjectModel, class_idx: int, t: np.ndarray) -> np.ndarray:
    """Stacked harmonic response waveforms, shape (n_harmonics, len(t)).

    The k-th harmonic of a phase-coded stimulus inherits k times the class
    phase (a time shift of the fundamental scales linearly in harmonic
    number), plus the response phase and the subject's jitter.
    """
    f = cfg.frequencies[class_idx]
    phi = cfg.phases[class_idx]
    rows = []
    for k in range(1, cfg.n_harmonics + 1):
        amp = cfg.harmonic_amplitudes[k - 1]
        theta = cfg.harmonic_phases[k - 1] + subject.phase_jitter[k - 1]
        rows.append(amp * np.sin(2.0 * np.pi * k * f * t + k * phi + theta))
    return np.stack(rows)


def _pink(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Unit-power 1/f noise via spectral shaping of white noise."""
    white = rng.standard_normal(shape)
    spec = np.fft.rfft(white, axis=1)
    freqs = np.fft.rfftfreq(shape[1])
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    shaped = np.fft.irfft(spec * scale, n=shape[1], axis=1)
    power = np.mean(shaped**2, axis=1, keepdims=True)
    return shaped / np.sqrt(np.maximum(power, 1e-300))


def synthesize_trial(
    cfg: StimulusConfig,
    subject: SubjectModel,
    class_idx: int,
    fs: float,
    duration: float,
) -> np.ndarray:
    """Synthesize one trial, shape (n_channels, duration*fs), float64.

    Deterministic for a fixed subject (including its rng_seed). Noise is
    scaled per channel so the clean-signal to noise power ratio matches
    subject.noise_snr_db; +inf disables noise entirely.
    """
    if not 0 <= class_idx < cfg.n_classes:
        raise IndexError(f"class_idx {class_idx} out of range [0, {cfg.n_classes})")
    n_samples = duration * fs
    if n_samples <= 0 or abs(n_samples - round(n_samples)) > 1e-9:
        raise ConfigError(f"duration*fs must be a positive integer, got {n_samples}")
    n_samples = int(round(n_samples))
    max_modeled = max(cfg.frequencies) * cfg.n_harmonics
    if fs <= 2.0 * max_modeled:
        raise ConfigError(
            f"fs={fs} violates Nyquist for highest modeled harmonic {max_modeled} Hz"
        )

    t = np.arange(n_samples, dtype=np.float64) / fs
    sources = _harmonic_sources(cfg, subject, class_idx, t)
    clean = subject.mixing @ sources

    if np.isposinf(subject.noise_snr_db):
        return clean

    rng = np.random.default_rng(
        np.random.SeedSequence([int(subject.rng_seed) & (2**63 - 1), class_idx])
    )
    noise = rng.standard_normal(clean.shape)
    if subject.pink_noise:
        noise = (noise / np.sqrt(np.mean(noise**2, axis=1, keepdims=True)) + _pink(rng, clean.shape)) / np.sqrt(2.0)
    sig_power = np.mean(clean**2, axis=1, keepdims=True)
    noise_power = np.mean(noise**2, axis=1, keepdims=True)
    target = sig_power / 10.0 ** (subject.noise_snr_db / 10.0)
    scale = np.sqrt(np.divide(target, noise_power, out=np.zeros_like(target), where=noise_power > 0))
    return clean + scale * noise


@dataclass
class Trial:
    """One labeled EEG trial: signal (n_channels, n_samples), class index."""

    signal: np.ndarray
    label: int


@dataclass
class SubjectData:
    """All trials of one subject, plus (for synthetic data) its forward model."""

    trials: list[Trial]
    model: SubjectModel | None = None


@dataclass
class EpochedDataset:
    """Multi-subject collection of labeled trials with a stimulus table.

    Invariants (checked on construction): all trials share one
    (n_channels, n_samples) shape, labels index the frequency table, and
    the sampling rate covers every modeled harmonic.
    """

    subjects: list[SubjectData]
    fs: float
    stimulus: StimulusConfig
    channel_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.subjects or not any(s.trials for s in self.subjects):
            raise ConfigError("dataset must contain at least one trial")
        shape = None
        for subj in self.subjects:
            for trial in subj.trials:
                if trial.signal.ndim != 2:
                    raise ConfigError("trial signals must be 2-D (channels x samples)")
                if shape is None:
                    shape = trial.signal.shape
                elif trial.signal.shape != shape:
                    raise ConfigError(
                        f"inconsistent trial shapes: {trial.signal.shape} vs {shape}"
                    )
                if not 0 <= trial.label < self.stimulus.n_classes:
                    raise ConfigError(
                        f"label {trial.label} out of range [0, {self.stimulus.n_classes})"
                    )
        if not self.channel_names:
            self.channel_names = [f"CH{i + 1}" for i in range(shape[0])]
        if len(self.channel_names) != shape[0]:
            raise ConfigError(
                f"{len(self.channel_names)} channel names for {shape[0]} channels"
            )
        max_modeled = max(self.stimulus.frequencies) * self.stimulus.n_harmonics
        if self.fs <= 2.0 * max_modeled:
            raise ConfigError(
                f"fs={self.fs} violates Nyquist for modeled harmonics up to {max_modeled} Hz"
            )

    @property
    def n_subjects(self) -> int:
        return len(self.subjects)

    @property
    def n_channels(self) -> int:
        return self.subjects[0].trials[0].signal.shape[0]

    @property
    def n_samples(self) -> int:
        return self.subjects[0].trials[0].signal.shape[1]

    @property
    def n_classes(self) -> int:
        return self.stimulus.n_classes


def build_dataset(
    cfg: StimulusConfig,
    n_subjects: int,
    trials_per_class: int,
    fs: float,
    duration: float,
    noise_snr_db: float,
    n_channels: int = 8,
    seed: int = 0,
    channel_names: list[str] | None = None,
    pink_noise: bool = False,
) -> EpochedDataset:
    """Synthesize a full multi-subject dataset.

    Subjects differ in mixing matrix and harmonic phase jitter; each trial
    gets its own noise seed. Trials are ordered round-by-round, cycling
    through all classes within each round.
    """
    if n_subjects < 1 or trials_per_class < 1:
        raise ConfigError("need at least one subject and one trial per class")
    root = np.random.SeedSequence(seed)
    subject_seqs = root.spawn(n_subjects)
    subjects = []
    for subj_seq in subject_seqs:
        subject = sample_subject(cfg, n_channels, noise_snr_db, subj_seq, pink_noise=pink_noise)
        trial_rng = np.random.default_rng(subj_seq.spawn(1)[0])
        trials = []
        for _ in range(trials_per_class):
            for class_idx in range(cfg.n_classes):
                per_trial = SubjectModel(
                    mixing=subject.mixing,
                    noise_snr_db=subject.noise_snr_db,
                    rng_seed=int(trial_rng.integers(0, 2**63 - 1)),
                    phase_jitter=subject.phase_jitter,
                    pink_noise=subject.pink_noise,
                )
                sig = synthesize_trial(cfg, per_trial, class_idx, fs, duration)
                trials.append(Trial(signal=sig.astype(np.float32), label=class_idx))
        subjects.append(SubjectData(trials=trials, model=subject))
    if channel_names is None and n_channels == len(OCCIPITAL_8):
        channel_names = list(OCCIPITAL_8)
    return EpochedDataset(
        subjects=subjects, fs=float(fs), stimulus=cfg, channel_names=channel_names or []
    )


@dataclass(frozen=True)
class WindowSpec:
    """Contiguous sample window: [start, start + window_samples)."""

    window_samples: int
    start: int


def extract_window(trial: np.ndarray, spec: WindowSpec) -> np.ndarray:
    """Slice a window out of a trial. Raises IndexError on out-of-range spec."""
    total = trial.shape[1]
    if spec.window_samples < 1:
        raise IndexError(f"window_samples must be >= 1, got {spec.window_samples}")
    if spec.start < 0 or spec.start + spec.window_samples > total:
        raise IndexError(
            f"window [{spec.start}, {spec.start + spec.window_samples}) "
            f"out of range for trial of {total} samples"
        )
    return trial[:, spec.start : spec.start + spec.window_samples]


def bandpass(x: np.ndarray, fs: float, lo: float, hi: float, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth bandpass along the sample axis.

    Args:
        x: array (n_channels, n_samples).
        fs: sampling rate, Hz.
        lo, hi: band edges, Hz; must satisfy 0 < lo < hi < fs/2.

    Returns:
        Filtered array of the same shape. DC is removed by construction.
    """
    if not (0.0 < lo < hi < fs / 2.0):
        raise ConfigError(f"invalid band ({lo}, {hi}) for fs={fs}")
    sos = sps.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return sps.sosfiltfilt(sos, x, axis=1)


def fft_features(x: np.ndarray, fs: float, band: tuple[float, float] = (8.0, 64.0)) -> np.ndarray:
    """Amplitude spectrum along the last (sample) axis, restricted to a band.

    Magnitudes are scaled by 2/S so a unit-amplitude sinusoid aligned with
    a bin reads 1.0 at that bin. Requires at least one second of data.
    Accepts (C, S) or any leading batch shape (..., C, S).
    """
    lo, hi = band
    n = x.shape[-1]
    if n < fs:
        raise ConfigError(f"fft_features needs >= 1 s of data ({int(fs)} samples), got {n}")
    if not (lo < hi <= fs / 2.0):
        raise ConfigError(f"invalid feature band ({lo}, {hi}) for fs={fs}")
    mag = np.abs(np.fft.rfft(x, axis=-1)) * (2.0 / n)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    mask = (freqs >= lo) & (freqs <= hi)
    return mag[..., mask]


def fft_feature_freqs(fs: float, n_samples: int, band: tuple[float, float] = (8.0, 64.0)) -> np.ndarray:
    """Frequency axis matching fft_features for the given window length."""
    freqs = np.fft.rfftfreq(n_samples, 1.0 / fs)
    lo, hi = band
    return freqs[(freqs >= lo) & (freqs <= hi)]
