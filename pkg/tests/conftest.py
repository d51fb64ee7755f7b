import numpy as np
import pytest

from lsirm.model import ChainState, ModelSpec

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_state(rng, n, p, d=2, spec=None, log_gamma=None):
    spec = spec or ModelSpec()
    return ChainState(
        theta=rng.normal(0, 1.2, n), beta=rng.normal(0, 1, p),
        z=rng.normal(0, 1, (n, d)), w=rng.normal(0, 1, (p, d)),
        log_gamma=rng.normal(0, 0.5) if log_gamma is None else log_gamma,
        sigma_sq=float(rng.uniform(0.5, 2.0)),
        alpha=np.exp(rng.normal(0, 0.4, p)) if spec.two_pl else None,
        sigma_eps_sq=float(rng.uniform(0.3, 2.0)) if spec.continuous else None,
        slab=True)


class ScriptedRng:
    """Generator stand-in returning caller-chosen normals and uniforms."""

    def __init__(self, normals=(), uniforms=(), gammas=()):
        self.normals = list(np.atleast_1d(normals).astype(float).ravel())
        self.uniforms = list(np.atleast_1d(uniforms).astype(float).ravel())
        self.gammas = list(gammas)

    def _take(self, pool, size):
        if size is None:
            return pool.pop(0)
        count = int(np.prod(size))
        out = np.array([pool.pop(0) for _ in range(count)])
        return out.reshape(size)

    def standard_normal(self, size=None):
        return self._take(self.normals, size)

    def random(self, size=None):
        return self._take(self.uniforms, size)

    def gamma(self, shape):
        return self.gammas.pop(0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
