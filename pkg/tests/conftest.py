import numpy as np
import pytest

from cuelab.signal import EEG_CHANNELS, StreamBuffer, StreamId, Window

FS = 256.0


def tone(freq, fs=FS, ms=500, amp=1.0, phase=0.0):
    n = int(round(ms / 1000 * fs))
    t = np.arange(n) / fs
    return amp * np.sin(2 * np.pi * freq * t + phase)


def eeg_window(channels: dict, fs=FS, start_ms=0, ms=500, rng=None):
    """A Window over all six EEG channels; unspecified channels get small noise."""
    rng = rng or np.random.default_rng(0)
    n = int(round(ms / 1000 * fs))
    data = np.stack([np.asarray(channels[c], dtype=float) if c in channels
                     else 0.1 * rng.standard_normal(n) for c in EEG_CHANNELS])
    return Window(start_ms, ms, EEG_CHANNELS, data, fs, StreamId.EEG)


def eeg_buffer(data, fs=FS, t0_ms=0):
    return StreamBuffer.from_array(StreamId.EEG, EEG_CHANNELS, fs, data, t0_ms)


@pytest.fixture(scope="session")
def calibration():
    from cuelab.sim import calibrate_model
    return calibrate_model(0)


@pytest.fixture(scope="session")
def model(calibration):
    return calibration.model


ACCEPTANCE_KEY = pytest.StashKey[list]()


class _Criterion:
    def __init__(self, lines, number, title):
        self.lines, self.number, self.title = lines, number, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = self.detail if exc_type is None else f"{exc_type.__name__}: {exc}".splitlines()[0]
        line = f"criterion {self.number:>2} {status}  {self.title}"
        self.lines.append(line + (f"  ({detail})" if detail else ""))
        return False


@pytest.fixture
def criterion(request):
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])
    return lambda number, title: _Criterion(lines, number, title)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
