# csg_hmm/core/experimento.py: pipeline do experimento (FSM) e varredura de variância do gradiente
from __future__ import annotations
from enum import Enum, auto
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from transitions import Machine

from csg_hmm.core.agrupamento import ClusterModel, Preprocessamento, agrupar_particao
from csg_hmm.core.amostradores import SamplerTrace, buffer_from_spectral_gap, run_csgmcmc, run_sgmcmc
from csg_hmm.core.avaliacao import (
    EspecificacaoEstimador,
    NormaMatriz,
    dispersoes_por_cluster,
    gradient_variance_mc,
    intervalos_ao_fim,
)
from csg_hmm.core.dados import T_PADRAO, ingest_csv, parametros_verdadeiros, simular_dataset
from csg_hmm.core.emissoes import EmissaoBase, TipoEmissao
from csg_hmm.core.erros import ConfigInvalida, CsgHmmError, InfeasibleGap, IoError, NonFiniteGradient
from csg_hmm.core.eventos import Evento, TipoEvento
from csg_hmm.core.hmm import HmmParams, TipoEstimativa
from csg_hmm.core.logger import CsvLogger
from csg_hmm.core.observers import (
    CsvObserverEventos,
    CsvObserverMetricas,
    CsvObserverTempos,
    CsvObserverTrace,
    Observer,
)
from csg_hmm.core.persistencia import (
    ExperimentConfig,
    carregar_matriz_referencia,
    salvar_clusters,
    salvar_config,
    salvar_json,
    salvar_params,
    sgld_de_config,
)
from csg_hmm.core.relatorios import calcular_metricas, iteracoes_na_cadencia
from csg_hmm.core.subcadeias import MinibatchPlan, SubchainPartition, alocar_cotas, partition
from csg_hmm.emissoes.bernoulli import Bernoulli
from csg_hmm.emissoes.gaussiana import Gaussiana
#--------------------------------------------------------------------------------------------------
# ESTADOS DO EXPERIMENTO
#--------------------------------------------------------------------------------------------------
class EstadoExperimento(Enum):
    CONFIGURADO = auto()
    DADOS_CARREGADOS = auto()
    PARTICIONADO = auto()
    AGRUPADO = auto()
    AMOSTRADO = auto()
    CONCLUIDO = auto()
    FALHOU = auto()


def _nome_estado(x) -> str:
    return x.name if hasattr(x, "name") else str(x)

#--------------------------------------------------------------------------------------------------
# INICIALIZAÇÃO DOS PARÂMETROS
#--------------------------------------------------------------------------------------------------
def params_iniciais(
    K: int,
    familia: str,
    y: np.ndarray,
    clusters: Optional[ClusterModel] = None,
    variancia_inicial: str = "GLOBAL",
) -> HmmParams:
    """A⁰ uniforme; emissão pelos centróides (quando houve agrupamento) ou pelos dados.

    Com `variancia_inicial="INTRA"` e agrupamento, as variâncias Gaussianas partem da
    variância intra-cluster dos núcleos em vez da variância global da série.
    """
    centroides = clusters.centroides if clusters is not None else None
    tipo = TipoEmissao(familia.upper())
    emissao: EmissaoBase
    if tipo is TipoEmissao.BERNOULLI:
        emissao = Bernoulli.inicial(K, y, centroides)
    else:
        variancia = None
        if clusters is not None and variancia_inicial.upper() == "INTRA":
            variancia = clusters.variancia_intra
        emissao = Gaussiana.inicial(K, y, centroides, variancia)
    return HmmParams(np.full((K, K), 1.0 / K), emissao)

#--------------------------------------------------------------------------------------------------
# EXPERIMENTO (FACHADA) - CARREGA, PARTICIONA, AGRUPA, AMOSTRA E AVALIA
#--------------------------------------------------------------------------------------------------
class Experimento:
    """Uma execução completa controlada por uma FSM (`transitions`).

    CONFIGURADO -> DADOS_CARREGADOS -> PARTICIONADO -> AGRUPADO -> AMOSTRADO -> CONCLUIDO;
    qualquer estado -> FALHOU. Cada mudança de estado emite FASE_ALTERADA.
    """
    def __init__(self, cfg: ExperimentConfig, saida: Optional[Path | str] = None) -> None:
        self.cfg = cfg
        self.saida = Path(saida or cfg.saida)
        self._observers: List[Observer] = []
        self.sementes = cfg.sementes()

        self.y: Optional[np.ndarray] = None
        self.holdout: Optional[np.ndarray] = None
        self.verdadeiros: Optional[HmmParams] = None
        self.particao: Optional[SubchainPartition] = None
        self.clusters: Optional[ClusterModel] = None
        self.inicial: Optional[HmmParams] = None
        self.trace: Optional[SamplerTrace] = None
        self.metricas: List[Dict[str, Any]] = []
        self.intervalos: List[Dict[str, float]] = []
        self._A_ref: Optional[np.ndarray] = None
        self._detalhes_fase: Dict[str, Any] = {}
        self._em_falha = False

        estados = list(EstadoExperimento)
        transicoes = [
            {"trigger": "carregar_dados", "source": EstadoExperimento.CONFIGURADO,
             "dest": EstadoExperimento.DADOS_CARREGADOS, "before": "_carregar"},
            {"trigger": "particionar", "source": EstadoExperimento.DADOS_CARREGADOS,
             "dest": EstadoExperimento.PARTICIONADO, "before": "_particionar"},
            {"trigger": "agrupar", "source": EstadoExperimento.PARTICIONADO,
             "dest": EstadoExperimento.AGRUPADO, "before": "_agrupar"},
            {"trigger": "amostrar", "source": EstadoExperimento.AGRUPADO,
             "dest": EstadoExperimento.AMOSTRADO, "before": "_amostrar"},
            {"trigger": "avaliar", "source": EstadoExperimento.AMOSTRADO,
             "dest": EstadoExperimento.CONCLUIDO, "before": "_avaliar"},
            {"trigger": "falhar", "source": "*", "dest": EstadoExperimento.FALHOU},
        ]
        self.maquina = Machine(
            model=self,
            states=estados,
            transitions=transicoes,
            initial=EstadoExperimento.CONFIGURADO,
            model_attribute="estado",
            send_event=True,
            after_state_change=self._apos_transicao,
        )

    #----------------------------------------------------------------------------------------------
    # OBSERVERS
    #----------------------------------------------------------------------------------------------
    def registrar_observer(self, obs: Observer) -> None:
        self._observers.append(obs)

    def _emitir(self, evt: Evento) -> None:
        """Entrega o evento a todos os observers.

        Falha de um observer obrigatório (CSVs da execução) vira IoError e interrompe a execução;
        os demais (console, coletores) são ignorados. Durante o relatório de erro nada é relançado.
        """
        for obs in self._observers:
            try:
                obs.on_event(evt)
            except Exception as e:
                if not obs.obrigatorio or self._em_falha:
                    continue
                if isinstance(e, CsgHmmError):
                    raise
                raise IoError(
                    f"Observer {type(obs).__name__} falhou: {e}",
                    detalhes={"observer": type(obs).__name__, "evento": evt.tipo.name},
                ) from e

    def _apos_transicao(self, event) -> None:
        detalhes, self._detalhes_fase = self._detalhes_fase, {}
        self._emitir(Evento(TipoEvento.FASE_ALTERADA, {
            "antes": _nome_estado(event.transition.source),
            "depois": _nome_estado(event.transition.dest),
            **detalhes,
        }))

    def registrar_observers_padrao(self) -> None:
        """Observers de arquivo do diretório de execução."""
        self.registrar_observer(CsvObserverTrace(self.saida / "trace.csv"))
        self.registrar_observer(CsvObserverTempos(self.saida / "tempos.csv"))
        self.registrar_observer(CsvObserverMetricas(self.saida / "metricas.csv"))
        self.registrar_observer(CsvObserverEventos(self.saida / "eventos.csv"))

    #----------------------------------------------------------------------------------------------
    # ETAPAS
    #----------------------------------------------------------------------------------------------
    def _carregar(self, event) -> None:
        d = self.cfg.dataset
        nome = d.nome.upper()
        if nome == "CSV":
            ingerida = ingest_csv(d.csv, d.coluna, d.max_T, self.sementes["dados"], d.cabecalho)
            serie = ingerida.valores
            h = int(d.holdout)
            if h > 0:
                if serie.size <= h + self.cfg.particao.L:
                    raise ConfigInvalida(
                        "Série curta demais para o holdout pedido.",
                        detalhes={"T": int(serie.size), "holdout": h},
                    )
                self.y, self.holdout = serie[:-h], serie[-h:]
            else:
                self.y = serie
            ref = self.cfg.avaliacao.referencia
            if ref:
                self._A_ref = carregar_matriz_referencia(ref)
            info = {"fonte": d.csv, "rejeitadas": ingerida.rejeitadas, "inicio": ingerida.inicio}
        else:
            T = int(d.T) if d.T is not None else T_PADRAO[nome]
            self.y = simular_dataset(nome, T, self.sementes["dados"]).y
            if d.holdout > 0:
                self.holdout = simular_dataset(nome, int(d.holdout), self.sementes["holdout"]).y
            self.verdadeiros = parametros_verdadeiros(nome)
            salvar_params(self.saida / "parametros_verdadeiros.json", self.verdadeiros)
            info = {"fonte": nome}
        if self.holdout is not None:
            np.savetxt(self.saida / "holdout.csv", self.holdout, fmt="%.17g")
        self.cfg.validar(int(self.y.size))
        self._detalhes_fase = {"T": int(self.y.size), **info}

    @property
    def A_referencia(self) -> Optional[np.ndarray]:
        if self.verdadeiros is not None:
            return self.verdadeiros.A
        return self._A_ref

    def _particionar(self, event) -> None:
        p = self.cfg.particao
        self.particao = partition(self.y.size, p.L, p.B or 0, p.nu)

    def _agrupar(self, event) -> None:
        if self.cfg.amostrador.algoritmo != "csgmcmc":
            return
        pl = self.cfg.plano
        self.clusters = agrupar_particao(
            self.y, self.particao, pl.M, self.sementes["agrupamento"],
            Preprocessamento(pl.preprocessamento.upper()), pl.reinicios,
        )
        salvar_clusters(self.saida / "clusters.json", self.clusters)
        self._emitir(Evento(TipoEvento.AGRUPAMENTO_AJUSTADO, {
            "M": self.clusters.M,
            "tamanhos": self.clusters.tamanhos.tolist(),
            "wcss": self.clusters.wcss,
        }))

    def _amostrar(self, event) -> None:
        cfg = self.cfg
        self.inicial = params_iniciais(
            cfg.modelo.K, cfg.modelo.emissao, self.y, self.clusters, cfg.modelo.variancia_inicial,
        )
        sgld = sgld_de_config(cfg)
        prior = cfg.prior.spec()
        if cfg.amostrador.algoritmo == "sgmcmc":
            plano = MinibatchPlan.uniforme(cfg.plano.S, self.sementes["amostrador"])
            self.trace = run_sgmcmc(
                self.y, sgld, self.particao, plano, self.inicial, prior,
                emissor=self._emitir, workers=cfg.threads,
            )
        else:
            B = cfg.particao.B
            if B is None:
                B = buffer_from_spectral_gap(self.inicial.A, sgld.c_buffer, self.y.size, sgld.buffer_max)
            self.particao = self.particao.com_buffer(B)
            plano = MinibatchPlan.estratificado(cfg.plano.cotas, self.sementes["amostrador"])
            self.trace = run_csgmcmc(
                self.y, sgld, self.particao, self.clusters, plano, self.inicial, prior,
                emissor=self._emitir, workers=cfg.threads,
            )

    def _avaliar(self, event) -> None:
        av = self.cfg.avaliacao
        norma = NormaMatriz(av.norma.upper())
        registros = {r.iteracao: r for r in self.trace.registros}
        pontos = [(0, 0.0, self.inicial)]
        for i in iteracoes_na_cadencia(registros, av.cadencia):
            r = registros[i]
            pontos.append((r.iteracao, r.tempo_decorrido, r.params))
        self.metricas = calcular_metricas(
            pontos, self.holdout, self.A_referencia, av.horizonte, norma, av.permutacoes, emissor=self._emitir
        )
        final = self.trace.params_final
        salvar_params(self.saida / "parametros_finais.json", final)
        if self.trace.abortado:
            # sem intervalos: o último iterado registrado pode já estar degenerado
            salvar_json(self.saida / "divergencia.json", self.trace.diagnostico)
            raise NonFiniteGradient("Amostrador divergiu.", detalhes=self.trace.diagnostico)
        self.intervalos = intervalos_ao_fim(final, self.y, av.horizonte, av.nivel)
        logger = CsvLogger()
        logger.reiniciar(self.saida / "intervalos.csv")
        logger.write_rows(self.saida / "intervalos.csv", ["k", "nivel", "inferior", "superior"], self.intervalos)

    #----------------------------------------------------------------------------------------------
    # EXECUÇÃO COMPLETA
    #----------------------------------------------------------------------------------------------
    def executar(self) -> Path:
        """Roda todas as etapas; em erro grava erro.json, emite ERRO, vai para FALHOU e relança."""
        self.saida.mkdir(parents=True, exist_ok=True)
        for antigo in ("erro.json", "divergencia.json"):
            (self.saida / antigo).unlink(missing_ok=True)
        salvar_config(self.saida / "config.json", self.cfg)
        try:
            self.carregar_dados()
            self.particionar()
            self.agrupar()
            self.amostrar()
            self.avaliar()
        except CsgHmmError as e:
            self._em_falha = True
            relatorio = {**e.para_dict(), "fase": _nome_estado(self.estado)}
            salvar_json(self.saida / "erro.json", relatorio)
            self._emitir(Evento(TipoEvento.ERRO, relatorio))
            self.falhar()
            raise
        return self.saida


def run_experiment(
    cfg: ExperimentConfig,
    saida: Optional[Path | str] = None,
    observers: Sequence[Observer] = (),
) -> Experimento:
    """Executa o pipeline configurado gravando os artefatos em `saida` (padrão: cfg.saida)."""
    exp = Experimento(cfg, saida)
    exp.registrar_observers_padrao()
    for obs in observers:
        exp.registrar_observer(obs)
    exp.executar()
    return exp

#--------------------------------------------------------------------------------------------------
# VARREDURA DE VARIÂNCIA DO GRADIENTE (GRADE S x L)
#--------------------------------------------------------------------------------------------------
PONTOS_VARREDURA = ("VERDADEIRO", "INICIAL")
ALOCACOES = ("NEYMAN", "PROPORCIONAL", "IGUAL")
N_PILOTO = 30   # membros por cluster no piloto da alocação de Neyman


def cotas_equilibradas(S: int, tamanhos: Sequence[int]) -> Optional[List[int]]:
    """Divide S entre os clusters (pelo menos 1 por cluster, no máximo n_m); None se impossível."""
    tamanhos = [int(n) for n in tamanhos]
    M = len(tamanhos)
    if S < M or S > sum(tamanhos):
        return None
    cotas = [min(S // M + (1 if m < S % M else 0), n) for m, n in enumerate(tamanhos)]
    sobra = S - sum(cotas)
    for m, n in enumerate(tamanhos):
        extra = min(sobra, n - cotas[m])
        cotas[m] += extra
        sobra -= extra
    return cotas


def _cotas_da_varredura(
    S: int, clusters: ClusterModel, alocacao: str, dispersoes: Optional[np.ndarray],
) -> Optional[List[int]]:
    if alocacao == "IGUAL":
        return cotas_equilibradas(S, clusters.tamanhos)
    return alocar_cotas(S, clusters.tamanhos, dispersoes if alocacao == "NEYMAN" else None)


def variance_sweep(
    cfg: ExperimentConfig,
    S_grid: Sequence[int],
    L_grid: Sequence[int],
    reps: int,
    saida: Optional[Path | str] = None,
    params: Optional[HmmParams] = None,
    y: Optional[np.ndarray] = None,
    observers: Sequence[Observer] = (),
    ponto: str = "VERDADEIRO",
    alocacao: str = "NEYMAN",
) -> Path:
    """Para cada (S, L), variância Monte Carlo dos estimadores uniforme e estratificado em θ fixo.

    Escreve variancias.csv (estimador, S, L, media_variancia) e variancias_componentes.csv
    (estimador, S, L, componente, variancia). θ: `params` explícito ou, conforme `ponto`,
    os parâmetros verdadeiros do dataset (VERDADEIRO) ou o ponto de partida dos amostradores (INICIAL).
    As cotas do estratificado seguem `alocacao`: NEYMAN (dispersões de um piloto por cluster),
    PROPORCIONAL (b_m ∝ n_m) ou IGUAL (divisão uniforme); sempre 1 <= b_m <= n_m.
    """
    ponto = ponto.upper()
    if ponto not in PONTOS_VARREDURA:
        raise ConfigInvalida(f"Ponto desconhecido: {ponto}", detalhes={"validos": list(PONTOS_VARREDURA)})
    alocacao = alocacao.upper()
    if alocacao not in ALOCACOES:
        raise ConfigInvalida(f"Alocação desconhecida: {alocacao}", detalhes={"validos": list(ALOCACOES)})
    if not S_grid or not L_grid:
        raise ConfigInvalida("Grades S e L não podem ser vazias.")
    pasta = Path(saida or cfg.saida)
    pasta.mkdir(parents=True, exist_ok=True)
    sementes = cfg.sementes()
    nome = cfg.dataset.nome.upper()
    if y is None:
        if nome == "CSV":
            d = cfg.dataset
            y = ingest_csv(d.csv, d.coluna, d.max_T, sementes["dados"], d.cabecalho).valores
        else:
            T = int(cfg.dataset.T) if cfg.dataset.T is not None else T_PADRAO[nome]
            y = simular_dataset(nome, T, sementes["dados"]).y
    if params is None and ponto == "INICIAL":
        params = params_iniciais(cfg.modelo.K, cfg.modelo.emissao, y)
    if params is None:
        if nome == "CSV":
            raise ConfigInvalida("Dataset CSV precisa de θ explícito (ou ponto INICIAL) para a varredura.")
        params = parametros_verdadeiros(nome)

    def emitir(evt: Evento) -> None:
        for obs in observers:
            obs.on_event(evt)

    resumo, componentes = pasta / "variancias.csv", pasta / "variancias_componentes.csv"
    logger = CsvLogger()
    logger.reiniciar(resumo)
    logger.reiniciar(componentes)
    B = cfg.particao.B
    if B is None:
        B = buffer_from_spectral_gap(params.A, cfg.amostrador.c_buffer, y.size, cfg.amostrador.buffer_max)
    pre = Preprocessamento(cfg.plano.preprocessamento.upper())

    for L in L_grid:
        particao = partition(y.size, int(L), B, cfg.particao.nu)
        clusters = agrupar_particao(y, particao, cfg.plano.M, sementes["agrupamento"], pre, cfg.plano.reinicios)
        dispersoes = None
        if alocacao == "NEYMAN":
            dispersoes = dispersoes_por_cluster(
                params, y, particao, clusters, N_PILOTO, sementes["agrupamento"], cfg.threads,
            )
        for S in S_grid:
            especificacoes: Dict[str, Optional[EspecificacaoEstimador]] = {"UNIFORM": None}
            if int(S) <= particao.n_subcadeias:
                especificacoes["UNIFORM"] = EspecificacaoEstimador(TipoEstimativa.UNIFORM, MinibatchPlan.uniforme(int(S)))
            cotas = _cotas_da_varredura(int(S), clusters, alocacao, dispersoes)
            especificacoes["STRATIFIED"] = (
                EspecificacaoEstimador(TipoEstimativa.STRATIFIED, MinibatchPlan.estratificado(cotas), clusters)
                if cotas is not None else None
            )
            for rotulo, espec in especificacoes.items():
                media = float("nan")
                variancias = None
                if espec is not None:
                    try:
                        r = gradient_variance_mc(
                            params, y, particao, espec, reps, sementes["amostrador"], cfg.prior.spec(), cfg.threads
                        )
                        media, variancias = r.media, r.variancias
                    except InfeasibleGap as e:
                        emitir(Evento(TipoEvento.ERRO, {**e.para_dict(), "S": int(S), "L": int(L)}))
                logger.write_row(resumo, ["estimador", "S", "L", "media_variancia"], {
                    "estimador": rotulo, "S": int(S), "L": int(L), "media_variancia": repr(media),
                })
                if variancias is not None:
                    logger.write_rows(componentes, ["estimador", "S", "L", "componente", "variancia"], (
                        {"estimador": rotulo, "S": int(S), "L": int(L), "componente": c, "variancia": repr(float(v))}
                        for c, v in enumerate(variancias)
                    ))
                emitir(Evento(TipoEvento.METRICA_CALCULADA, {
                    "metrica": f"variancia_{rotulo.lower()}", "iteracao": 0, "valor": media,
                    "S": int(S), "L": int(L), "final": True,
                }))
    return resumo
