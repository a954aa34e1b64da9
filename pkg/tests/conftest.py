import mpmath as mp
import pytest

mp.mp.dps = 40

ACCEPTANCE_LINES = []


def bs_oracle(S, K, v):
    """High-precision Black-Scholes call in total-variance form."""
    S, K, v = mp.mpf(S), mp.mpf(K), mp.mpf(v)
    sv = mp.sqrt(v)
    d1 = (mp.log(S / K) + v / 2) / sv
    d2 = d1 - sv
    return S * mp.ncdf(d1) - K * mp.ncdf(d2)


def greeks_oracle(S, K, v, h=mp.mpf("1e-12")):
    """Central differences of the high-precision price."""
    S, K, v = mp.mpf(S), mp.mpf(K), mp.mpf(v)
    hs, hv = h * S, h * v
    f = lambda s, w: bs_oracle(s, K, w)
    d_s = (f(S + hs, v) - f(S - hs, v)) / (2 * hs)
    d_v = (f(S, v + hv) - f(S, v - hv)) / (2 * hv)
    d_vv = (f(S, v + hv) - 2 * f(S, v) + f(S, v - hv)) / hv**2
    d_sv = (f(S + hs, v + hv) - f(S + hs, v - hv) - f(S - hs, v + hv) + f(S - hs, v - hv)) / (4 * hs * hv)
    return tuple(float(x) for x in (d_s, d_v, d_vv, d_sv))


@pytest.fixture
def acceptance():
    def record(number, ok, text):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
