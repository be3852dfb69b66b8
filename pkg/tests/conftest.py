import pytest

from replica_cs.prior import (
    bernoulli_gaussian_prior,
    bpsk_prior,
    figure1_prior,
    gaussian_prior,
)

PRIORS = {
    "gaussian": gaussian_prior(),
    "bpsk": bpsk_prior(),
    "bernoulli_gaussian": bernoulli_gaussian_prior(0.1, 10.0),
    "fig1_a01": figure1_prior(0.1),
    "fig1_a03": figure1_prior(0.3),
}


@pytest.fixture(params=sorted(PRIORS), ids=sorted(PRIORS))
def any_prior(request):
    return PRIORS[request.param]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
