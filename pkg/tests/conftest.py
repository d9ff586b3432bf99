import numpy as np
import pytest

from stylebackdoor.audio import AudioClip


def peak_frequency(x, sample_rate=16000, nfft=1 << 18):
    """Spectral peak of a windowed, zero-padded FFT with parabolic refinement."""
    x = np.asarray(x, dtype=float)
    spec = np.abs(np.fft.rfft(x * np.hanning(x.size), nfft))
    k = int(np.argmax(spec[1:-1])) + 1
    a, b, c = np.log(spec[k - 1 : k + 2] + 1e-300)
    offset = 0.5 * (a - c) / (a - 2 * b + c)
    return (k + offset) * sample_rate / nfft


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def noise_clip(rng):
    return AudioClip(0.3 * rng.standard_normal(16000), 16000)


# one line per acceptance criterion, printed at the end of the session
CRITERIA: dict = {}


def record_criterion(number: int, title: str, passed, detail: str) -> None:
    """``passed`` is True, False, or None for a skipped criterion."""
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    line = f"criterion {number:>2} {status}  {title}: {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
