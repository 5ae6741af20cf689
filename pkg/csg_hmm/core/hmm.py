# csg_hmm/core/hmm.py: representação do HMM, simulação, verossimilhança marginal e gradiente exato
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from csg_hmm.core.emissoes import EmissaoBase
from csg_hmm.core.erros import (
    DegenerateLikelihood,
    EmptySeries,
    ErroDeValidacao,
    NonFiniteGradient,
    NonStochastic,
    ReducibleChain,
    ShapeMismatch,
    ZeroColumn,
)
#--------------------------------------------------------------------------------------------------
# CONVENÇÕES
#--------------------------------------------------------------------------------------------------
# A[i, j] = P(x_t = i | x_{t-1} = j): matriz coluna-estocástica.
# Estados são 0..K-1. Séries são np.ndarray 1-D de floats.
TOL_COLUNA = 1e-8          # desvio máximo aceito na soma de cada coluna
LIMIAR_REDUTIVEL = 1e-12   # entradas abaixo disso contam como zero só no teste de irredutibilidade

TransitionMatrix = np.ndarray
ObservationSeries = np.ndarray
LatentPath = np.ndarray

#--------------------------------------------------------------------------------------------------
# VALIDAÇÕES
#--------------------------------------------------------------------------------------------------
def validar_transicao(A: np.ndarray) -> np.ndarray:
    """Confere que A é quadrada, com entradas em [0, 1] e colunas somando 1."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ShapeMismatch("Matriz de transição deve ser K x K com K >= 1.", detalhes={"shape": A.shape})
    if not np.all(np.isfinite(A)) or np.any(A < -TOL_COLUNA) or np.any(A > 1.0 + TOL_COLUNA):
        raise NonStochastic("Entradas da matriz de transição fora de [0, 1].", detalhes={"A": A.tolist()})
    somas = A.sum(axis=0)
    desvio = float(np.max(np.abs(somas - 1.0)))
    if desvio > TOL_COLUNA:
        raise NonStochastic(
            "Colunas da matriz de transição não somam 1.",
            detalhes={"somas": somas.tolist(), "desvio": desvio},
        )
    return A


def validar_serie(y) -> np.ndarray:
    """Série de observações: T >= 1 e todos os valores finitos."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise EmptySeries("Série de observações vazia.")
    if not np.all(np.isfinite(y)):
        ruins = np.flatnonzero(~np.isfinite(y))
        raise ErroDeValidacao(
            "Série contém valores não finitos.",
            detalhes={"indices": ruins[:10].tolist(), "total": int(ruins.size)},
        )
    return y

#--------------------------------------------------------------------------------------------------
# PARÂMETROS DO MODELO θ = (A, φ)
#--------------------------------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class HmmParams:
    """θ = (A, φ): matriz de transição coluna-estocástica e família de emissão."""
    A: np.ndarray
    emissoes: EmissaoBase

    def __post_init__(self) -> None:
        A = validar_transicao(self.A).copy()
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        if self.emissoes.K != A.shape[0]:
            raise ShapeMismatch(
                "Número de estados da emissão difere de A.",
                detalhes={"K_A": A.shape[0], "K_emissao": self.emissoes.K},
            )

    @property
    def K(self) -> int:
        return self.A.shape[0]

    def com(self, A: Optional[np.ndarray] = None, emissoes: Optional[EmissaoBase] = None) -> "HmmParams":
        return HmmParams(self.A if A is None else A, self.emissoes if emissoes is None else emissoes)

    def permutar(self, perm) -> "HmmParams":
        """Renomeia os estados em conjunto (linhas e colunas de A e parâmetros de emissão)."""
        perm = np.asarray(perm, dtype=int)
        return HmmParams(self.A[np.ix_(perm, perm)], self.emissoes.permutar(perm))

    def vetor_natural(self) -> np.ndarray:
        """[A por linhas | parâmetros naturais da emissão]."""
        return np.concatenate([self.A.ravel(), self.emissoes.parametros()])

#--------------------------------------------------------------------------------------------------
# PRIORI
#--------------------------------------------------------------------------------------------------
class TipoPrior(Enum):
    PLANA = "PLANA"
    GAUSSIANA = "GAUSSIANA"


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Priori sobre o vetor natural [A por linhas | emissão].

    PLANA: ∇log p = 0 (priori imprópria constante; também cobre a uniforme da Bernoulli).
    GAUSSIANA: coordenadas independentes N(medias, desvios²).
    """
    tipo: TipoPrior = TipoPrior.PLANA
    medias: Optional[np.ndarray] = None
    desvios: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.tipo is TipoPrior.GAUSSIANA:
            if self.medias is None or self.desvios is None:
                raise ErroDeValidacao("Priori Gaussiana precisa de médias e desvios.")
            if np.any(np.asarray(self.desvios, dtype=float) <= 0):
                raise ErroDeValidacao("Desvios da priori devem ser positivos.")

    def _checar(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        m = np.broadcast_to(np.asarray(self.medias, dtype=float), theta.shape)
        s = np.broadcast_to(np.asarray(self.desvios, dtype=float), theta.shape)
        return m, s

    def log_prior(self, params: HmmParams) -> float:
        if self.tipo is TipoPrior.PLANA:
            return 0.0
        theta = params.vetor_natural()
        m, s = self._checar(theta)
        return float(-0.5 * np.sum(((theta - m) / s) ** 2))

    def grad_log_prior(self, params: HmmParams) -> Tuple[np.ndarray, np.ndarray]:
        """(parte de A como K x K, parte da emissão) em coordenadas naturais."""
        K = params.K
        n_em = params.emissoes.parametros().size
        if self.tipo is TipoPrior.PLANA:
            return np.zeros((K, K)), np.zeros(n_em)
        theta = params.vetor_natural()
        m, s = self._checar(theta)
        g = -(theta - m) / s**2
        return g[: K * K].reshape(K, K), g[K * K :]


PRIORI_PLANA = PriorSpec()

#--------------------------------------------------------------------------------------------------
# ESTIMATIVA DE GRADIENTE
#--------------------------------------------------------------------------------------------------
class TipoEstimativa(Enum):
    FULL = "FULL"
    UNIFORM = "UNIFORM"
    STRATIFIED = "STRATIFIED"


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """∇U(θ) (ou um termo dele) com proveniência.

    a_grad: derivada de U em relação às entradas de Â, avaliada em Â = A, onde
            A = |Â| normalizada por coluna (a projeção dos amostradores como reparametrização).
    emission_grad: derivada de U nos parâmetros naturais da emissão.
    """
    a_grad: np.ndarray
    emission_grad: np.ndarray
    kind: TipoEstimativa
    sampled_centers: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.a_grad)) and np.all(np.isfinite(self.emission_grad))):
            raise NonFiniteGradient(
                "Estimativa de gradiente com componentes não finitos.",
                detalhes={"kind": self.kind.value, "centros": list(self.sampled_centers)[:20]},
            )

    def vetor(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.a_grad).ravel(), np.asarray(self.emission_grad)])

    def norma(self) -> float:
        return float(np.linalg.norm(self.vetor()))

    def escalado(self, fator: float) -> "GradientEstimate":
        return GradientEstimate(self.a_grad * fator, self.emission_grad * fator, self.kind, self.sampled_centers)

    def __add__(self, outro: "GradientEstimate") -> "GradientEstimate":
        return GradientEstimate(
            self.a_grad + outro.a_grad,
            self.emission_grad + outro.emission_grad,
            self.kind,
            self.sampled_centers + outro.sampled_centers,
        )

#--------------------------------------------------------------------------------------------------
# ANÁLISE DA CADEIA LATENTE
#--------------------------------------------------------------------------------------------------
def _checar_irredutivel(A: np.ndarray) -> None:
    K = A.shape[0]
    suporte = (A > LIMIAR_REDUTIVEL).astype(float)
    M = (suporte + np.eye(K)) / 2.0
    alcance = np.linalg.matrix_power(M, K)
    if not np.all(alcance > 0):
        raise ReducibleChain(
            "Matriz de transição redutível.",
            detalhes={"pares_inalcancaveis": int(np.sum(alcance <= 0))},
        )


def stationary_distribution(A: TransitionMatrix) -> np.ndarray:
    """π com Aπ = π, π >= 0, Σπ = 1 (sistema (A - I)π = 0 com a normalização anexada)."""
    A = validar_transicao(A)
    _checar_irredutivel(A)
    K = A.shape[0]
    sistema = np.vstack([A - np.eye(K), np.ones((1, K))])
    lado_direito = np.concatenate([np.zeros(K), [1.0]])
    pi, *_ = np.linalg.lstsq(sistema, lado_direito, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def spectral_gap(A: TransitionMatrix) -> float:
    """1 - |λ₂|, λ₂ o autovalor de segundo maior módulo; K = 1 devolve 1."""
    A = validar_transicao(A)
    _checar_irredutivel(A)
    if A.shape[0] == 1:
        return 1.0
    modulos = np.sort(np.abs(np.linalg.eigvals(A)))[::-1]
    return float(min(max(1.0 - modulos[1], 0.0), 1.0))


def project_columns_to_simplex(A_raw: np.ndarray) -> TransitionMatrix:
    """A[i, j] = |Â[i, j]| / Σ_i |Â[i, j]| (passo de projeção dos amostradores)."""
    A_abs = np.abs(np.asarray(A_raw, dtype=float))
    somas = A_abs.sum(axis=0)
    nulas = np.flatnonzero(~(somas > 0))
    if nulas.size:
        raise ZeroColumn("Coluna nula na projeção para o simplex.", detalhes={"colunas": nulas.tolist()})
    return A_abs / somas

#--------------------------------------------------------------------------------------------------
# SIMULAÇÃO
#--------------------------------------------------------------------------------------------------
def simulate(params: HmmParams, T: int, seed: int | None) -> Tuple[LatentPath, ObservationSeries]:
    """x_0 ~ π, x_t | x_{t-1} pela coluna x_{t-1} de A, y_t pela emissão de x_t.

    Devolve (estados x_0..x_T, observações y_1..y_T).
    """
    if T < 1:
        raise ErroDeValidacao("T deve ser >= 1.", detalhes={"T": T})
    rng = np.random.default_rng(seed)
    pi = stationary_distribution(params.A)
    K = params.K
    acumulada = np.cumsum(params.A, axis=0)
    u = rng.random(T + 1)
    estados = np.empty(T + 1, dtype=int)
    estados[0] = min(int(np.searchsorted(np.cumsum(pi), u[0], side="right")), K - 1)
    for t in range(1, T + 1):
        estados[t] = min(int(np.searchsorted(acumulada[:, estados[t - 1]], u[t], side="right")), K - 1)
    y = params.emissoes.amostrar(estados[1:], rng)
    return estados, y

#--------------------------------------------------------------------------------------------------
# VEROSSIMILHANÇA
#--------------------------------------------------------------------------------------------------
def emission_matrix(params: HmmParams, y: float) -> np.ndarray:
    """P(y): diagonal K x K com p(y | x = j, φ)."""
    return np.diag(params.emissoes.densidade(np.array([y], dtype=float))[0])


def verossimilhancas_escaladas(emissoes: EmissaoBase, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(Ψ, m): Ψ[t, k] = p(y_t | k) / exp(m_t), com m_t = max_k log p(y_t | k).

    Cada linha pode ser reescalada livremente: todas as razões usadas adiante são
    invariantes a isso, e m devolve a escala ao log-verossimilhança.
    """
    logp = emissoes.log_densidade(y)
    m = np.max(logp, axis=1)
    if not np.all(np.isfinite(m)):
        t = int(np.flatnonzero(~np.isfinite(m))[0])
        raise DegenerateLikelihood("Observação impossível sob todos os estados.", detalhes={"t": t})
    return np.exp(logp - m[:, None]), m


def propagar_adiante(A: np.ndarray, psi: np.ndarray, alfa0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Recursão α_t ∝ P(y_t) A α_{t-1} normalizada em L1.

    Devolve (alfas (n+1, K) com alfas[0] = α_0 normalizado, log das escalas (n,)).
    """
    n, K = psi.shape
    alfas = np.empty((n + 1, K))
    total = float(np.sum(alfa0))
    if not total > 0:
        raise DegenerateLikelihood("Mensagem inicial nula.")
    alfas[0] = alfa0 / total
    log_escalas = np.empty(n)
    for t in range(n):
        v = psi[t] * (A @ alfas[t])
        c = v.sum()
        if not c > 0:
            raise DegenerateLikelihood("Mensagem adiante se anulou.", detalhes={"t": t})
        alfas[t + 1] = v / c
        log_escalas[t] = np.log(c)
    return alfas, log_escalas


def propagar_atras(A: np.ndarray, psi: np.ndarray, beta_fim: np.ndarray) -> np.ndarray:
    """Recursão β_{t-1}ᵀ ∝ β_tᵀ P(y_t) A normalizada em L1; betas[t] é a mensagem após a posição t."""
    n, K = psi.shape
    betas = np.empty((n + 1, K))
    total = float(np.sum(beta_fim))
    if not total > 0:
        raise DegenerateLikelihood("Mensagem final nula.")
    betas[n] = beta_fim / total
    for t in range(n, 0, -1):
        w = A.T @ (psi[t - 1] * betas[t])
        c = w.sum()
        if not c > 0:
            raise DegenerateLikelihood("Mensagem para trás se anulou.", detalhes={"t": t - 1})
        betas[t - 1] = w / c
    return betas


def log_verossimilhanca_fixa(A: np.ndarray, emissoes: EmissaoBase, y: np.ndarray, pi: np.ndarray) -> float:
    """log 1ᵀ (Π P(y_t) A) π sem validar A (usado por diferenças finitas fora do simplex)."""
    psi, m = verossimilhancas_escaladas(emissoes, np.asarray(y, dtype=float))
    _, log_escalas = propagar_adiante(np.asarray(A, dtype=float), psi, np.asarray(pi, dtype=float))
    return float(np.log(np.sum(pi)) + log_escalas.sum() + m.sum())


def log_marginal_likelihood(params: HmmParams, y: ObservationSeries) -> float:
    """log p(y | θ) com reescala a cada passo (sem underflow)."""
    y = validar_serie(y)
    return log_verossimilhanca_fixa(params.A, params.emissoes, y, stationary_distribution(params.A))


def log_posterior(params: HmmParams, y: ObservationSeries, prior: PriorSpec = PRIORI_PLANA) -> float:
    """log p(y | θ) + log p(θ) = -U(θ) a menos de constante."""
    return log_marginal_likelihood(params, y) + prior.log_prior(params)


def filtrar(params: HmmParams, y: ObservationSeries) -> np.ndarray:
    """Distribuições filtradas: linha t é P(x_t | y_1..y_t); linha 0 é π."""
    y = validar_serie(y)
    psi, _ = verossimilhancas_escaladas(params.emissoes, y)
    alfas, _ = propagar_adiante(params.A, psi, stationary_distribution(params.A))
    return alfas

#--------------------------------------------------------------------------------------------------
# GRADIENTE
#--------------------------------------------------------------------------------------------------
def gradiente_segmento(
    A: np.ndarray,
    emissoes: EmissaoBase,
    y: np.ndarray,
    alfa0: np.ndarray,
    beta_fim: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """∂/∂θ log(βᵀ (Π_{t no segmento} P(y_t) A) α) pela regra do produto em duas varreduras.

    Devolve (gradiente em relação às entradas brutas A_ij, gradiente natural da emissão).
    Invariante a reescalas positivas de alfa0 e beta_fim.
    """
    psi, _ = verossimilhancas_escaladas(emissoes, y)
    alfas, _ = propagar_adiante(A, psi, alfa0)
    betas = propagar_atras(A, psi, beta_fim)
    anteriores = alfas[:-1]
    preditas = anteriores @ A.T
    w = betas[1:] * psi
    denominadores = np.sum(w * preditas, axis=1)
    if not np.all(denominadores > 0):
        raise DegenerateLikelihood("Denominador nulo no termo local do gradiente.")
    g_A = (w / denominadores[:, None]).T @ anteriores
    gama = w * preditas / denominadores[:, None]
    g_em = np.concatenate([np.sum(gama * bloco, axis=0) for bloco in emissoes.blocos_grad(y)])
    return g_A, g_em


def direcao_tangente(g_A: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Regra da cadeia pela normalização de colunas em Â = A: g_ij - Σ_k A_kj g_kj."""
    return g_A - np.sum(A * g_A, axis=0, keepdims=True)


def termo_prior(params: HmmParams, prior: PriorSpec, kind: TipoEstimativa) -> GradientEstimate:
    """-∇log p(θ) no mesmo sistema de coordenadas das estimativas."""
    g_A, g_em = prior.grad_log_prior(params)
    return GradientEstimate(-direcao_tangente(g_A, params.A), -g_em, kind)


def exact_grad_U(params: HmmParams, y: ObservationSeries, prior: PriorSpec = PRIORI_PLANA) -> GradientEstimate:
    """∇U(θ) com passes completos adiante/atrás (π tratado como constante em relação a A)."""
    y = validar_serie(y)
    pi = stationary_distribution(params.A)
    g_A, g_em = gradiente_segmento(params.A, params.emissoes, y, pi, np.ones(params.K))
    verossimilhanca = GradientEstimate(-direcao_tangente(g_A, params.A), -g_em, TipoEstimativa.FULL)
    return verossimilhanca + termo_prior(params, prior, TipoEstimativa.FULL)
