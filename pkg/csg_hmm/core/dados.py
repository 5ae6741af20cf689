# csg_hmm/core/dados.py: datasets sintéticos embutidos e ingestão de séries em CSV
from __future__ import annotations
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from csg_hmm.core.erros import EmptySeries, IoError, ParseError, UnknownDataset
from csg_hmm.core.hmm import HmmParams, simulate
from csg_hmm.core.persistencia import salvar_params
from csg_hmm.emissoes.bernoulli import Bernoulli
from csg_hmm.emissoes.gaussiana import Gaussiana
#--------------------------------------------------------------------------------------------------
# MODELOS VERDADEIROS DOS DATASETS EMBUTIDOS
#--------------------------------------------------------------------------------------------------
EPSILON_RARO = 1e-4

T_PADRAO: Dict[str, int] = {
    "BD": 1_000_000,
    "ID": 1_000_000,
    "BERN": 300_000,
    "RARE2": 1_000_000,
}


def parametros_verdadeiros(nome: str) -> HmmParams:
    """Parâmetros geradores de cada dataset embutido (A coluna-estocástica)."""
    nome = nome.strip().upper()
    if nome == "BD":
        # balanceado: cada estado fica com 0.9 ou passa ao anterior (circular)
        A = np.array([
            [0.9, 0.1, 0.0, 0.0],
            [0.0, 0.9, 0.1, 0.0],
            [0.0, 0.0, 0.9, 0.1],
            [0.1, 0.0, 0.0, 0.9],
        ])
        return HmmParams(A, Gaussiana([-6.0, -3.0, 0.0, 3.0], [2.0] * 4))
    if nome == "ID":
        # desbalanceado: estado 0 comum, os demais só são alcançados a partir dele
        A = np.array([
            [0.992, 0.01, 0.01, 0.01, 0.01],
            [0.002, 0.99, 0.0, 0.0, 0.0],
            [0.002, 0.0, 0.99, 0.0, 0.0],
            [0.002, 0.0, 0.0, 0.99, 0.0],
            [0.002, 0.0, 0.0, 0.0, 0.99],
        ])
        return HmmParams(A, Gaussiana([-20.0, -10.0, 0.0, 10.0, 20.0], [1.0] * 5))
    if nome == "BERN":
        A = np.array([[0.9, 0.1], [0.1, 0.9]])
        return HmmParams(A, Bernoulli([0.9, 0.1]))
    if nome == "RARE2":
        A = np.array([[1.0 - EPSILON_RARO, 0.1], [EPSILON_RARO, 0.9]])
        return HmmParams(A, Gaussiana([0.0, 1.0], [1e-4, 1e-4]))
    raise UnknownDataset(f"Dataset desconhecido: {nome}", detalhes={"nome": nome, "validos": sorted(T_PADRAO)})

#--------------------------------------------------------------------------------------------------
# GERAÇÃO
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class DatasetGerado:
    nome: str
    params: HmmParams
    y: np.ndarray
    estados: np.ndarray
    observacoes: Optional[Path] = None
    latentes: Optional[Path] = None
    parametros: Optional[Path] = None


def _escrever_coluna(path: Path, valores: np.ndarray, fmt: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, valores, fmt=fmt)
    except OSError as e:
        raise IoError(f"Falha ao escrever '{path}': {e}", detalhes={"caminho": str(path)})


def simular_dataset(nome: str, T: Optional[int] = None, seed: Optional[int] = None) -> DatasetGerado:
    """Simula o dataset em memória (estados x_1..x_T alinhados às observações)."""
    nome = nome.strip().upper()
    params = parametros_verdadeiros(nome)
    T = T_PADRAO[nome] if T is None else int(T)
    estados, y = simulate(params, T, seed)
    return DatasetGerado(nome, params, y, estados[1:])


def generate_dataset(
    nome: str,
    T: Optional[int] = None,
    seed: Optional[int] = None,
    destino: Path | str = "data",
) -> DatasetGerado:
    """Escreve observacoes.csv, latentes.csv e parametros_verdadeiros.json em `destino`."""
    gerado = simular_dataset(nome, T, seed)
    pasta = Path(destino)
    obs, lat, par = pasta / "observacoes.csv", pasta / "latentes.csv", pasta / "parametros_verdadeiros.json"
    _escrever_coluna(obs, gerado.y, "%.17g")
    _escrever_coluna(lat, gerado.estados, "%d")
    salvar_params(par, gerado.params)
    return DatasetGerado(gerado.nome, gerado.params, gerado.y, gerado.estados, obs, lat, par)

#--------------------------------------------------------------------------------------------------
# INGESTÃO DE CSV
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SerieIngerida:
    valores: np.ndarray
    rejeitadas: int       # linhas com valor não finito descartadas
    inicio: int           # índice (base 0) da janela selecionada na série lida
    total_lido: int


def ingest_csv(
    path: Path | str,
    coluna: int = 0,
    max_T: Optional[int] = None,
    seed: Optional[int] = None,
    cabecalho: bool = False,
    separador: str = ",",
) -> SerieIngerida:
    """Lê uma série univariada; acima de max_T, sorteia uma janela contígua de tamanho max_T."""
    p = Path(path)
    valores = []
    rejeitadas = 0
    try:
        with p.open("r", encoding="utf-8", newline="") as f:
            for numero, linha in enumerate(csv.reader(f, delimiter=separador), start=1):
                if cabecalho and numero == 1:
                    continue
                if not linha or all(not c.strip() for c in linha):
                    continue
                if coluna >= len(linha):
                    raise ParseError(
                        f"Linha {numero} sem a coluna {coluna}.",
                        detalhes={"linha": numero, "campos": len(linha)},
                        linha=numero,
                    )
                campo = linha[coluna].strip()
                try:
                    v = float(campo)
                except ValueError:
                    raise ParseError(
                        f"Valor não numérico na linha {numero}: {campo!r}",
                        detalhes={"linha": numero, "valor": campo},
                        linha=numero,
                    ) from None
                if not math.isfinite(v):
                    rejeitadas += 1
                    continue
                valores.append(v)
    except OSError as e:
        raise IoError(f"Falha ao ler '{p}': {e}", detalhes={"caminho": str(p)})

    if not valores:
        raise EmptySeries("Nenhuma observação válida no CSV.", detalhes={"caminho": str(p), "rejeitadas": rejeitadas})
    serie = np.asarray(valores, dtype=float)
    inicio = 0
    if max_T is not None and serie.size > max_T:
        inicio = int(np.random.default_rng(seed).integers(0, serie.size - max_T + 1))
        serie = serie[inicio : inicio + max_T]
    return SerieIngerida(serie, rejeitadas, inicio, len(valores))
