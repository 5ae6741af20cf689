# csg_hmm/core/amostradores.py: núcleo SGLD e os dois amostradores (SG-MCMC e CSG-MCMC)
from __future__ import annotations
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from csg_hmm.core.agrupamento import ClusterModel
from csg_hmm.core.emissoes import EmissaoBase
from csg_hmm.core.erros import (
    CsgHmmError,
    DegenerateLikelihood,
    ErroDeValidacao,
    NonFiniteGradient,
    ReducibleChain,
    ZeroColumn,
)
from csg_hmm.core.eventos import Evento, TipoEvento
from csg_hmm.core.hmm import (
    PRIORI_PLANA,
    GradientEstimate,
    HmmParams,
    PriorSpec,
    TipoEstimativa,
    project_columns_to_simplex,
    spectral_gap,
    validar_serie,
)
from csg_hmm.core.subcadeias import (
    MinibatchPlan,
    ModoPlano,
    SubchainPartition,
    estimativa_em_centros,
    sortear_uniforme,
    stratified_grad,
    validar_cotas,
)

Emissor = Callable[[Evento], None]

# falhas que encerram a cadeia e ficam registradas no trace
DIVERGENCIAS = (NonFiniteGradient, ZeroColumn, DegenerateLikelihood, ReducibleChain)

#--------------------------------------------------------------------------------------------------
# CONFIGURAÇÃO DO SGLD
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True)
class SgldConfig:
    """Passo ε_n = a (b + n)^(-γ), n = 1..n_iter.

    n_passos só é usado pelo SG-MCMC (passos internos por iteração).
    c_buffer e buffer_max controlam a regra B = ⌈c / gap⌉ limitada.
    """
    a: float = 1e-4
    b: float = 0.0
    gamma: float = 0.0
    injetar_ruido: bool = True
    n_iter: int = 100
    n_passos: int = 1
    seed: Optional[int] = None
    c_buffer: float = 1.0
    buffer_max: Optional[int] = None

    def __post_init__(self) -> None:
        erros = {}
        if not self.a > 0:
            erros["a"] = self.a
        if self.b < 0:
            erros["b"] = self.b
        if not 0.0 <= self.gamma <= 1.0:
            erros["gamma"] = self.gamma
        if self.n_iter < 1:
            erros["n_iter"] = self.n_iter
        if self.n_passos < 1:
            erros["n_passos"] = self.n_passos
        if not self.c_buffer > 0:
            erros["c_buffer"] = self.c_buffer
        if self.buffer_max is not None and self.buffer_max < 0:
            erros["buffer_max"] = self.buffer_max
        if erros:
            raise ErroDeValidacao("Configuração SGLD inválida.", detalhes=erros)

    def passo(self, n: int) -> float:
        return self.a * (self.b + n) ** (-self.gamma)

#--------------------------------------------------------------------------------------------------
# ESTADO E TRACE
#--------------------------------------------------------------------------------------------------
@dataclass
class SamplerState:
    params: HmmParams
    n: int
    B: int
    rng: np.random.Generator


@dataclass(frozen=True, eq=False)
class RegistroIteracao:
    iteracao: int
    tempo_decorrido: float
    params: HmmParams
    norma_grad: float
    B: int
    centros: Tuple[int, ...]

    def para_linha(self) -> Dict[str, Any]:
        """Linha do trace.csv (sem relógio, para que reexecuções gerem o mesmo arquivo)."""
        K = self.params.K
        linha: Dict[str, Any] = {"iteracao": self.iteracao, "B": self.B, "n_centros": len(self.centros)}
        for i in range(K):
            for j in range(K):
                linha[f"A_{i}_{j}"] = repr(float(self.params.A[i, j]))
        nomes = self.params.emissoes.nomes_parametros()
        for nome, valor in zip(nomes, self.params.emissoes.parametros()):
            linha[nome] = repr(float(valor))
        linha["norma_grad"] = repr(float(self.norma_grad))
        return linha


def cabecalho_trace(params: HmmParams) -> List[str]:
    K = params.K
    colunas = ["iteracao", "B", "n_centros"]
    colunas += [f"A_{i}_{j}" for i in range(K) for j in range(K)]
    colunas += params.emissoes.nomes_parametros()
    colunas.append("norma_grad")
    return colunas


@dataclass
class SamplerTrace:
    """Registros por iteração externa (somente acréscimo)."""
    algoritmo: str
    inicial: HmmParams
    registros: List[RegistroIteracao] = field(default_factory=list)
    abortado: bool = False
    diagnostico: Optional[Dict[str, Any]] = None

    def __len__(self) -> int:
        return len(self.registros)

    def adicionar(self, registro: RegistroIteracao) -> None:
        if self.registros and registro.tempo_decorrido < self.registros[-1].tempo_decorrido:
            raise ErroDeValidacao("Tempos do trace devem ser não decrescentes.")
        self.registros.append(registro)

    @property
    def params_final(self) -> HmmParams:
        return self.registros[-1].params if self.registros else self.inicial

    def linhas(self) -> List[Dict[str, Any]]:
        return [r.para_linha() for r in self.registros]

#--------------------------------------------------------------------------------------------------
# NÚCLEO SGLD
#--------------------------------------------------------------------------------------------------
def sgld_step(
    theta: np.ndarray,
    grad: GradientEstimate | np.ndarray,
    eps: float,
    injetar_ruido: bool,
    rng: np.random.Generator,
) -> np.ndarray:
    """θ' = θ - (ε/2) g + η, η ~ N(0, ε I) com ruído ligado e η = 0 caso contrário."""
    g = grad.vetor() if isinstance(grad, GradientEstimate) else np.asarray(grad, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if g.shape != theta.shape:
        raise ErroDeValidacao("Gradiente e θ com formas diferentes.", detalhes={"theta": theta.shape, "grad": g.shape})
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("Gradiente não finito no passo SGLD.", detalhes={"norma": float(np.linalg.norm(g))})
    novo = theta - 0.5 * eps * g
    if injetar_ruido:
        novo = novo + rng.normal(0.0, math.sqrt(eps), size=theta.shape)
    if not np.all(np.isfinite(novo)):
        raise NonFiniteGradient("Parâmetros não finitos após o passo SGLD.", detalhes={"eps": eps})
    return novo


def buffer_from_spectral_gap(
    A: np.ndarray,
    c: float = 1.0,
    T: Optional[int] = None,
    buffer_max: Optional[int] = None,
) -> int:
    """B = ⌈c / gap(A)⌉ limitado por buffer_max (ou max(1, ⌊T/10⌋)); gap nulo devolve o limite."""
    gap = spectral_gap(A)
    limite = buffer_max if buffer_max is not None else (max(1, T // 10) if T is not None else None)
    if gap <= 0:
        if limite is None:
            raise ErroDeValidacao("Cadeia periódica exige um limite para o buffer.", detalhes={"gap": gap})
        return int(limite)
    B = max(1, math.ceil(c / gap - 1e-9))
    return int(min(B, limite)) if limite is not None else int(B)


def _grad_A_bruto(estimativa: GradientEstimate, A_bruto: np.ndarray) -> np.ndarray:
    """Regra da cadeia de A = |Â| / colunas até as entradas de Â."""
    somas = np.abs(A_bruto).sum(axis=0)
    return np.sign(A_bruto) * estimativa.a_grad / somas


def _projetar(A_bruto: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(A_bruto)):
        raise NonFiniteGradient("Matriz de transição não finita após o passo.")
    return project_columns_to_simplex(A_bruto)


def _restringir(emissoes: EmissaoBase, psi: np.ndarray) -> EmissaoBase:
    """Volta das coordenadas do amostrador; fora do domínio conta como divergência."""
    with np.errstate(over="ignore"):
        try:
            return emissoes.de_irrestrito(psi)
        except ErroDeValidacao as e:
            raise NonFiniteGradient("Emissões fora do domínio após o passo.", detalhes=e.detalhes) from e
#--------------------------------------------------------------------------------------------------
# EXECUÇÃO COMUM
#--------------------------------------------------------------------------------------------------
class _Execucao:
    """Laço externo compartilhado: cronometragem, trace, eventos e aborto por divergência."""

    def __init__(self, algoritmo: str, inicial: HmmParams, emissor: Optional[Emissor]) -> None:
        self.trace = SamplerTrace(algoritmo, inicial)
        self._emissor = emissor
        self._t0 = time.perf_counter()

    def _emitir(self, tipo: TipoEvento, payload: dict) -> None:
        if self._emissor:
            self._emissor(Evento(tipo, payload))

    def registrar(self, estado: SamplerState, norma: float, centros: Tuple[int, ...]) -> None:
        registro = RegistroIteracao(
            iteracao=estado.n,
            tempo_decorrido=time.perf_counter() - self._t0,
            params=estado.params,
            norma_grad=norma,
            B=estado.B,
            centros=centros,
        )
        self.trace.adicionar(registro)
        self._emitir(TipoEvento.ITERACAO_CONCLUIDA, {
            "algoritmo": self.trace.algoritmo,
            "iteracao": registro.iteracao,
            "tempo_decorrido": registro.tempo_decorrido,
            "norma_grad": norma,
            "B": estado.B,
            "linha": registro.para_linha(),
            "cabecalho": cabecalho_trace(estado.params),
        })

    def abortar(self, erro: CsgHmmError, n: int) -> None:
        self.trace.abortado = True
        self.trace.diagnostico = {"iteracao": n, **erro.para_dict()}
        self._emitir(TipoEvento.DIVERGENCIA, self.trace.diagnostico)

#--------------------------------------------------------------------------------------------------
# SG-MCMC (MINIBATCH UNIFORME, BUFFER ADAPTATIVO)
#--------------------------------------------------------------------------------------------------
def run_sgmcmc(
    y: np.ndarray,
    config: SgldConfig,
    particao: SubchainPartition,
    plano: MinibatchPlan,
    inicial: HmmParams,
    prior: PriorSpec = PRIORI_PLANA,
    emissor: Optional[Emissor] = None,
    workers: int = 1,
) -> SamplerTrace:
    """Minibatches uniformes com buffer recalculado a cada iteração.

    Cada iteração: B pelo gap espectral de A atual, sorteio de S subcadeias espaçadas,
    n_passos atualizações de Â com φ fixo (média dos iterados e projeção) e depois
    n_passos atualizações de φ com A fixo nas mesmas subcadeias (média e restrição).
    """
    y = validar_serie(y)
    if plano.modo is not ModoPlano.UNIFORME:
        raise ErroDeValidacao("SG-MCMC usa plano uniforme.", detalhes={"modo": plano.modo.value})
    execucao = _Execucao("sgmcmc", inicial, emissor)
    estado = SamplerState(inicial, 0, particao.B, np.random.default_rng(config.seed))
    escala = particao.n_subcadeias / plano.S
    kind = TipoEstimativa.UNIFORM
    for n in range(1, config.n_iter + 1):
        try:
            params = estado.params
            B = buffer_from_spectral_gap(params.A, config.c_buffer, particao.T, config.buffer_max)
            part_n = particao.com_buffer(B)
            centros = sortear_uniforme(part_n, plano.S, estado.rng)
            pesos = np.full(centros.size, escala)
            eps = config.passo(n)

            def estimar(p: HmmParams) -> GradientEstimate:
                return estimativa_em_centros(p, y, part_n, centros, pesos, kind, prior, workers)

            # A com φ fixo
            A_bruto = params.A.copy()
            visitados_A = []
            norma = float("nan")
            for s in range(config.n_passos):
                est = estimar(params.com(A=project_columns_to_simplex(A_bruto)))
                if s == 0:
                    norma = est.norma()
                g = _grad_A_bruto(est, A_bruto).ravel()
                A_bruto = sgld_step(A_bruto.ravel(), g, eps, config.injetar_ruido, estado.rng).reshape(A_bruto.shape)
                _projetar(A_bruto)
                visitados_A.append(A_bruto)
            A_novo = _projetar(np.mean(visitados_A, axis=0))

            # φ com A fixo
            emissoes = params.emissoes
            psi = emissoes.para_irrestrito()
            visitados_phi = []
            for _ in range(config.n_passos):
                atual = _restringir(emissoes, psi)
                est = estimar(HmmParams(A_novo, atual))
                g = est.emission_grad * atual.jacobiano()
                psi = sgld_step(psi, g, eps, config.injetar_ruido, estado.rng)
                visitados_phi.append(psi)
            emissoes_novas = _restringir(emissoes, np.mean(visitados_phi, axis=0))

            estado.params = HmmParams(A_novo, emissoes_novas)
            estado.n, estado.B = n, B
        except DIVERGENCIAS as e:
            execucao.abortar(e, n)
            break
        execucao.registrar(estado, norma, tuple(int(c) for c in centros))
    return execucao.trace

#--------------------------------------------------------------------------------------------------
# CSG-MCMC (MINIBATCH ESTRATIFICADO, BUFFER FIXO)
#--------------------------------------------------------------------------------------------------
def run_csgmcmc(
    y: np.ndarray,
    config: SgldConfig,
    particao: SubchainPartition,
    clusters: ClusterModel,
    plano: MinibatchPlan,
    inicial: HmmParams,
    prior: PriorSpec = PRIORI_PLANA,
    emissor: Optional[Emissor] = None,
    workers: int = 1,
) -> SamplerTrace:
    """Minibatches estratificados com B fixo (o de `particao`).

    Cada iteração sorteia um subconjunto novo de cada cluster e faz uma atualização
    conjunta de (Â, φ), seguida de projeção e restrição ao domínio.
    """
    y = validar_serie(y)
    if plano.modo is not ModoPlano.ESTRATIFICADO:
        raise ErroDeValidacao("CSG-MCMC usa plano estratificado.", detalhes={"modo": plano.modo.value})
    if not clusters.cobre(particao):
        raise ErroDeValidacao("Agrupamento não cobre a partição.", detalhes={"M": clusters.M})
    validar_cotas(clusters, plano.cotas)
    execucao = _Execucao("csgmcmc", inicial, emissor)
    estado = SamplerState(inicial, 0, particao.B, np.random.default_rng(config.seed))
    K = inicial.K
    for n in range(1, config.n_iter + 1):
        try:
            params = estado.params
            est = stratified_grad(params, y, particao, clusters, plano, prior, rng=estado.rng, workers=workers)
            theta = np.concatenate([params.A.ravel(), params.emissoes.para_irrestrito()])
            g = np.concatenate([
                _grad_A_bruto(est, params.A).ravel(),
                est.emission_grad * params.emissoes.jacobiano(),
            ])
            theta = sgld_step(theta, g, config.passo(n), config.injetar_ruido, estado.rng)
            A_novo = _projetar(theta[: K * K].reshape(K, K))
            estado.params = HmmParams(A_novo, _restringir(params.emissoes, theta[K * K :]))
            estado.n = n
        except DIVERGENCIAS as e:
            execucao.abortar(e, n)
            break
        execucao.registrar(estado, est.norma(), est.sampled_centers)
    return execucao.trace
