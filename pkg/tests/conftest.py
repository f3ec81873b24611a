import numpy as np
import pytest

from ngvi import expfam


def random_spd(rng, d, lo=0.3, hi=3.0):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diagonal(r))
    lam = rng.uniform(lo, hi, d)
    s = (q * lam) @ q.T
    return 0.5 * (s + s.T)


def random_member(rng, family, lo=0.3, hi=3.0, mean_scale=2.0):
    """Random interior expectation parameter of ``family``."""
    d = family.dim
    mu = rng.uniform(-mean_scale, mean_scale, d)
    if family.kind is expfam.Kind.FULL:
        sigma = random_spd(rng, d, lo, hi)
    else:
        sigma = rng.uniform(lo, hi, d)
    return expfam.ExpParam.from_moments(family, mu if family.has_mean else None, sigma)


FAMILY_MAKERS = {"full": expfam.full, "diag": expfam.diag, "centered": expfam.diag_centered}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(FAMILY_MAKERS))
def family_maker(request):
    return FAMILY_MAKERS[request.param]


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_acceptance_lines", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
