import hypothesis
import numpy as np
import pytest

from renewnet import model as M

hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def mating_model():
    return M.builtin_mating(theta=0.77)


@pytest.fixture(scope="session")
def resource_model():
    return M.builtin_resource(eta=0.23)


@pytest.fixture(scope="session")
def juvenile_adult_model():
    return M.builtin_juvenile_adult(
        a_max=1.0,
        x_min=1.0,
        x_max=2.0,
        juvenile_mortality="0.1",
        adult_mortality="0.2",
        horizon=5.0,
        da=0.005,
    )


def single_edge_raw(length=1.0, growth="1", mortality="0", initial="0", horizon=1.0, **extra):
    raw = {
        "horizon": horizon,
        "edges": [
            {
                "id": "e",
                "length": length,
                "growth": growth,
                "mortality": mortality,
                "initial": initial,
            }
        ],
        "couplings": [
            {
                "edge": "e",
                "alpha": {"expr": "0", "traces": []},
                "beta": {"expr": "0", "integrals": []},
            }
        ],
    }
    raw.update(extra)
    return raw


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
