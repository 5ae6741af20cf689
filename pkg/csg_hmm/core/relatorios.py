# csg_hmm/core/relatorios.py: leitura dos CSVs de uma execução e recálculo de métricas a partir do trace
from __future__ import annotations
import csv
import math
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import stats

from csg_hmm.core.avaliacao import NormaMatriz, k_step_log_predictive, transition_error
from csg_hmm.core.erros import CsgHmmError, DegenerateLikelihood, IoError, ParseError
from csg_hmm.core.eventos import Evento, TipoEvento
from csg_hmm.core.hmm import HmmParams
from csg_hmm.core.logger import CsvLogger
from csg_hmm.core.persistencia import carregar_params, criar_emissao
# -------------------------------------------------------------------------------------------------
# UTIL: LEITURA DE ARQUIVOS
# -------------------------------------------------------------------------------------------------
def _ler_linhas(path: Path) -> List[Dict[str, str]]:
    if not path.exists():
        raise IoError(f"Arquivo não encontrado: {path}", detalhes={"caminho": str(path)})
    with path.open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def ler_trace(path: Path | str) -> List[Dict[str, float]]:
    """Lê `trace.csv` convertendo todas as colunas para número."""
    linhas = []
    for numero, row in enumerate(_ler_linhas(Path(path)), start=2):
        try:
            linhas.append({k: float(v) for k, v in row.items()})
        except (TypeError, ValueError):
            raise ParseError(f"Linha {numero} do trace inválida.", detalhes={"linha": numero}, linha=numero) from None
    return linhas


def ler_tempos(path: Path | str) -> Dict[int, float]:
    """`tempos.csv` como {iteracao: tempo_decorrido}; ausente devolve {}."""
    p = Path(path)
    if not p.exists():
        return {}
    return {int(r["iteracao"]): float(r["tempo_decorrido"]) for r in _ler_linhas(p)}


def ler_metricas(path: Path | str) -> List[Dict[str, Any]]:
    rows = []
    for r in _ler_linhas(Path(path)):
        rows.append({
            "metrica": r["metrica"],
            "iteracao": int(r["iteracao"]),
            "tempo_decorrido": float(r["tempo_decorrido"]),
            "valor": float(r["valor"]),
        })
    return rows


def ler_variancias(path: Path | str) -> List[Dict[str, Any]]:
    """`variancias.csv` como lista de {estimador, S, L, media_variancia}."""
    return [
        {"estimador": r["estimador"], "S": int(r["S"]), "L": int(r["L"]), "media_variancia": float(r["media_variancia"])}
        for r in _ler_linhas(Path(path))
    ]


def ler_serie(path: Path | str) -> np.ndarray:
    p = Path(path)
    if not p.exists():
        raise IoError(f"Arquivo não encontrado: {p}", detalhes={"caminho": str(p)})
    return np.loadtxt(p, dtype=float, ndmin=1)

# -------------------------------------------------------------------------------------------------
# RECONSTRUÇÃO DE PARÂMETROS A PARTIR DE UMA LINHA DO TRACE
# -------------------------------------------------------------------------------------------------
def params_da_linha(linha: Dict[str, float]) -> HmmParams:
    """Inverte `RegistroIteracao.para_linha()`: detecta a família pelas colunas."""
    K = int(round(math.sqrt(sum(1 for c in linha if c.startswith("A_")))))
    A = np.array([[linha[f"A_{i}_{j}"] for j in range(K)] for i in range(K)])
    if "media_0" in linha:
        emissao = {
            "tipo": "GAUSSIANA",
            "medias": [linha[f"media_{k}"] for k in range(K)],
            "variancias": [linha[f"variancia_{k}"] for k in range(K)],
        }
    else:
        emissao = {"tipo": "BERNOULLI", "probabilidades": [linha[f"prob_{k}"] for k in range(K)]}
    return HmmParams(A, criar_emissao(emissao))

# -------------------------------------------------------------------------------------------------
# MÉTRICAS
# -------------------------------------------------------------------------------------------------
def metricas_em(
    params: HmmParams,
    holdout: Optional[np.ndarray],
    A_ref: Optional[np.ndarray],
    horizonte: int = 10,
    norma: NormaMatriz = NormaMatriz.FROBENIUS,
    permutacoes: bool = True,
) -> Dict[str, float]:
    """log preditiva k passos (se há holdout) e ‖A - A_ref‖ (se há referência)."""
    valores: Dict[str, float] = {}
    if holdout is not None and holdout.size > horizonte:
        try:
            valores["log_preditiva"] = k_step_log_predictive(params, holdout, horizonte)
        except DegenerateLikelihood:
            valores["log_preditiva"] = float("-inf")
    if A_ref is not None and A_ref.shape == params.A.shape:
        valores["erro_A"] = transition_error(params.A, A_ref, norma, permutacoes)
    return valores


def iteracoes_na_cadencia(iteracoes: Iterable[int], cadencia: int) -> List[int]:
    """Múltiplos da cadência, mais a primeira e a última iteração."""
    its = sorted(set(int(i) for i in iteracoes))
    if not its:
        return []
    escolhidas = {its[0], its[-1]} | {i for i in its if i % cadencia == 0}
    return sorted(escolhidas)


def calcular_metricas(
    pontos: Iterable[Tuple[int, float, HmmParams]],
    holdout: Optional[np.ndarray],
    A_ref: Optional[np.ndarray],
    horizonte: int = 10,
    norma: NormaMatriz = NormaMatriz.FROBENIUS,
    permutacoes: bool = True,
    emissor: Optional[Callable[[Evento], None]] = None,
) -> List[Dict[str, Any]]:
    """Uma linha (metrica, iteracao, tempo_decorrido, valor) por métrica e ponto."""
    pontos = list(pontos)
    linhas = []
    for idx, (iteracao, tempo, params) in enumerate(pontos):
        for nome, valor in metricas_em(params, holdout, A_ref, horizonte, norma, permutacoes).items():
            linha = {"metrica": nome, "iteracao": iteracao, "tempo_decorrido": tempo, "valor": valor}
            linhas.append(linha)
            if emissor:
                emissor(Evento(TipoEvento.METRICA_CALCULADA, {**linha, "final": idx == len(pontos) - 1}))
    return linhas


def recalcular_metricas(
    pasta: Path | str,
    holdout: Optional[np.ndarray] = None,
    A_ref: Optional[np.ndarray] = None,
    cadencia: int = 25,
    horizonte: int = 10,
    norma: NormaMatriz = NormaMatriz.FROBENIUS,
    permutacoes: bool = True,
    destino: Optional[Path | str] = None,
) -> List[Dict[str, Any]]:
    """Recalcula as métricas de uma execução a partir de trace.csv (e tempos.csv).

    Sem holdout explícito usa holdout.csv da pasta; sem referência usa
    parametros_verdadeiros.json ou, na falta dele, o último iterado do trace.
    """
    pasta = Path(pasta)
    trace = ler_trace(pasta / "trace.csv")
    if not trace:
        raise CsgHmmError("Trace vazio.", detalhes={"pasta": str(pasta)})
    tempos = ler_tempos(pasta / "tempos.csv")
    if holdout is None and (pasta / "holdout.csv").exists():
        holdout = ler_serie(pasta / "holdout.csv")
    if A_ref is None:
        verdadeiros = pasta / "parametros_verdadeiros.json"
        if verdadeiros.exists():
            A_ref = carregar_params(verdadeiros).A
        else:
            A_ref = params_da_linha(trace[-1]).A

    por_iteracao = {int(l["iteracao"]): l for l in trace}
    escolhidas = iteracoes_na_cadencia(por_iteracao, cadencia)
    pontos = [(i, tempos.get(i, float("nan")), params_da_linha(por_iteracao[i])) for i in escolhidas]
    linhas = calcular_metricas(pontos, holdout, A_ref, horizonte, norma, permutacoes)

    destino = Path(destino) if destino else pasta / "metricas_recalculadas.csv"
    logger = CsvLogger()
    logger.reiniciar(destino)
    headers = ["metrica", "iteracao", "tempo_decorrido", "valor"]
    logger.write_rows(destino, headers, ({**l, "valor": repr(float(l["valor"]))} for l in linhas))
    return linhas


def resumo_final(linhas: List[Dict[str, Any]]) -> Dict[str, float]:
    """Último valor de cada métrica."""
    finais: Dict[str, Tuple[int, float]] = {}
    for l in linhas:
        atual = finais.get(l["metrica"])
        if atual is None or l["iteracao"] >= atual[0]:
            finais[l["metrica"]] = (l["iteracao"], l["valor"])
    return {k: v for k, (_, v) in finais.items()}


def primeira_iteracao_abaixo(linhas: Iterable[Dict[str, Any]], metrica: str, limiar: float) -> Optional[int]:
    """Primeira iteração em que `metrica` fica abaixo de `limiar`; None se nunca fica."""
    its = [int(l["iteracao"]) for l in linhas if l["metrica"] == metrica and float(l["valor"]) < limiar]
    return min(its) if its else None


def tendencia(linhas: Iterable[Dict[str, Any]], metrica: str) -> float:
    """ρ de Spearman entre iteração e valor de `metrica` (nan com menos de 3 pontos finitos)."""
    pares = [
        (int(l["iteracao"]), float(l["valor"]))
        for l in linhas if l["metrica"] == metrica and math.isfinite(float(l["valor"]))
    ]
    if len(pares) < 3:
        return float("nan")
    its, valores = zip(*pares)
    return float(stats.spearmanr(its, valores)[0])
