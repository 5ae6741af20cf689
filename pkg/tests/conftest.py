# tests/conftest.py: instâncias pequenas compartilhadas e a opção --lentos
from __future__ import annotations

import numpy as np
import pytest

from csg_hmm.core.dados import parametros_verdadeiros
from csg_hmm.core.hmm import HmmParams, simulate
from csg_hmm.emissoes.bernoulli import Bernoulli
from csg_hmm.emissoes.gaussiana import Gaussiana


def pytest_addoption(parser):
    parser.addoption("--lentos", action="store_true", default=False, help="roda os testes marcados como lento")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--lentos"):
        return
    pular = pytest.mark.skip(reason="use --lentos para rodar")
    for item in items:
        if "lento" in item.keywords:
            item.add_marker(pular)

#--------------------------------------------------------------------------------------------------
# FÁBRICAS
#--------------------------------------------------------------------------------------------------
def _params_aleatorios(rng: np.random.Generator, K: int, familia: str = "GAUSSIANA") -> HmmParams:
    """A com entradas longe de zero (diferenças finitas não cruzam o simplex)."""
    A = rng.dirichlet(np.full(K, 2.0), size=K).T
    A = 0.8 * A + 0.2 / K
    if familia == "BERNOULLI":
        emissao = Bernoulli(rng.uniform(0.2, 0.8, size=K))
    else:
        emissao = Gaussiana(rng.normal(0.0, 2.0, size=K), rng.uniform(0.5, 2.0, size=K))
    return HmmParams(A, emissao)


@pytest.fixture
def params_aleatorios():
    return _params_aleatorios


@pytest.fixture
def params_bd() -> HmmParams:
    return parametros_verdadeiros("BD")


@pytest.fixture
def params_dois_estados() -> HmmParams:
    A = np.array([[0.9, 0.1], [0.1, 0.9]])
    return HmmParams(A, Gaussiana([0.0, 3.0], [1.0, 1.0]))


@pytest.fixture
def serie_curta(params_dois_estados):
    """T = 50 observações do modelo de dois estados."""
    _, y = simulate(params_dois_estados, 50, seed=7)
    return y


@pytest.fixture
def serie_bd(params_bd):
    _, y = simulate(params_bd, 2000, seed=11)
    return y
