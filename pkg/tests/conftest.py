import numpy as np
import pytest

from scatenc.scattering import Path, ScatteringConfig, bank_for


def spatial_modulus(u, spectrum):
    """|psi * u| by explicit circular convolution in the spatial domain, O(n^4)."""
    psi = np.fft.ifft2(spectrum)
    h, w = u.shape
    out = np.zeros((h, w), dtype=complex)
    for dy in range(h):
        for dx in range(w):
            out += psi[dy, dx] * np.roll(u, (dy, dx), axis=(0, 1))
    return np.abs(out)


def brute_force_scatter(u, config: ScatteringConfig):
    """Materialize every modulus field with spatial convolution; return {path: mean}."""
    bank = bank_for(config, u.shape)
    J, L = config.J, config.L
    out = {Path(0): u.mean()}
    u1 = {}
    for j1 in range(J):
        for g1 in range(L):
            u1[j1, g1] = spatial_modulus(u, bank.get(j1, g1).spectrum)
            out[Path(1, j1, g1)] = u1[j1, g1].mean()
    if config.M == 2:
        for (j1, g1), field in u1.items():
            for j2 in range(j1 + 1, J):
                for g2 in range(L):
                    out[Path(2, j1, g1, j2, g2)] = spatial_modulus(field, bank.get(j2, g2).spectrum).mean()
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, printed after the run
_acceptance: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        num = int(report.nodeid.split("test_criterion_")[1].split("_")[0])
        detail = dict(report.user_properties).get("detail", "")
        _acceptance[num] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_acceptance):
        status, detail = _acceptance[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")
