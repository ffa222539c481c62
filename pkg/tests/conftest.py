import numpy as np
import pytest

from advcheck.data import generate_gauss2
from advcheck.models import MlpClassifier
from advcheck.numerics import Rng, init_mlp, sgd_train


@pytest.fixture
def rng():
    return Rng(0)


@pytest.fixture(scope="session")
def gauss2():
    return generate_gauss2(300, 0.05, 0.3, Rng(1234))


@pytest.fixture(scope="session")
def mlp_params(gauss2):
    params = init_mlp([2, 16, 2], Rng(99))
    return sgd_train(params, gauss2.inputs, gauss2.labels, 40, 0.5, Rng(100))


@pytest.fixture(scope="session")
def mlp_clf(mlp_params):
    return MlpClassifier(mlp_params)


@pytest.fixture(scope="session")
def clean_accuracy(mlp_clf, gauss2):
    preds = np.array([mlp_clf.predict(x) for x in gauss2.inputs])
    return float((preds == gauss2.labels).mean())
