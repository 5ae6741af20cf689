# csg_hmm/core/persistencia.py: configuração do experimento e (de)serialização JSON de parâmetros e clusters
from __future__ import annotations
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from csg_hmm.core.agrupamento import ClusterModel, Preprocessamento
from csg_hmm.core.amostradores import SgldConfig
from csg_hmm.core.avaliacao import MAX_K_PERMUTACOES
from csg_hmm.core.emissoes import EmissaoBase, TipoEmissao
from csg_hmm.core.erros import ConfigInvalida, CsgHmmError, IoError
from csg_hmm.core.hmm import HmmParams, PriorSpec, TipoPrior
from csg_hmm.emissoes.bernoulli import Bernoulli
from csg_hmm.emissoes.gaussiana import Gaussiana

ALGORITMOS = ("sgmcmc", "csgmcmc")
DATASETS_EMBUTIDOS = ("BD", "ID", "BERN", "RARE2")
VARIANCIAS_INICIAIS = ("GLOBAL", "INTRA")   # INTRA: variância intra-cluster dos núcleos (só CSG-MCMC)

#--------------------------------------------------------------------------------------------------
# JSON GENÉRICO
#--------------------------------------------------------------------------------------------------
def salvar_json(path: Path | str, dados: Any) -> None:
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(dados, indent=2, ensure_ascii=False), encoding="utf-8")
    except OSError as e:
        raise IoError(f"Falha ao escrever '{p}': {e}", detalhes={"caminho": str(p)})


def carregar_json(path: Path | str) -> Any:
    p = Path(path)
    try:
        texto = p.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"Falha ao ler '{p}': {e}", detalhes={"caminho": str(p)})
    try:
        return json.loads(texto)
    except json.JSONDecodeError as e:
        raise ConfigInvalida(
            f"JSON malformado em '{p}'.",
            detalhes={"caminho": str(p), "linha": e.lineno, "coluna": e.colno},
        )

#--------------------------------------------------------------------------------------------------
# FÁBRICA DE EMISSÕES E PARÂMETROS
#--------------------------------------------------------------------------------------------------
def criar_emissao(cfg: Dict[str, Any]) -> EmissaoBase:
    """Instancia uma família de emissão a partir do dict salvo por `para_dict()`."""
    tipo = str(cfg.get("tipo", "")).strip().upper()
    try:
        if tipo == TipoEmissao.GAUSSIANA.value:
            return Gaussiana(cfg["medias"], cfg["variancias"])
        if tipo == TipoEmissao.BERNOULLI.value:
            return Bernoulli(cfg["probabilidades"])
    except KeyError as e:
        raise ConfigInvalida(f"Campo ausente na emissão {tipo}: {e}", detalhes={"tipo": tipo})
    raise ConfigInvalida(f"Família de emissão não suportada: {tipo}", detalhes={"tipo": tipo})


def params_para_dict(params: HmmParams) -> Dict[str, Any]:
    return {"A": params.A.tolist(), "emissao": params.emissoes.para_dict()}


def params_de_dict(d: Dict[str, Any]) -> HmmParams:
    if "A" not in d or "emissao" not in d:
        raise ConfigInvalida("Parâmetros precisam de 'A' e 'emissao'.", detalhes={"chaves": sorted(d)})
    return HmmParams(np.asarray(d["A"], dtype=float), criar_emissao(d["emissao"]))


def salvar_params(path: Path | str, params: HmmParams) -> None:
    salvar_json(path, params_para_dict(params))


def carregar_params(path: Path | str) -> HmmParams:
    return params_de_dict(carregar_json(path))


def carregar_matriz_referencia(path: Path | str) -> np.ndarray:
    """Aceita {"A": ...} puro ou um JSON completo de parâmetros."""
    dados = carregar_json(path)
    if not isinstance(dados, dict) or "A" not in dados:
        raise ConfigInvalida("Arquivo de referência sem 'A'.", detalhes={"caminho": str(path)})
    return np.asarray(dados["A"], dtype=float)


def salvar_clusters(path: Path | str, clusters: ClusterModel) -> None:
    salvar_json(path, clusters.para_dict())


def carregar_clusters(path: Path | str) -> ClusterModel:
    return ClusterModel.de_dict(carregar_json(path))

#--------------------------------------------------------------------------------------------------
# CONFIGURAÇÃO DO EXPERIMENTO
#--------------------------------------------------------------------------------------------------
@dataclass
class DatasetConfig:
    nome: str = "BD"                  # BD | ID | BERN | RARE2 | CSV
    T: Optional[int] = None           # None = padrão do dataset embutido
    csv: Optional[str] = None
    coluna: int = 0
    cabecalho: bool = False
    max_T: Optional[int] = None
    holdout: int = 2000


@dataclass
class ModeloConfig:
    K: int = 4
    emissao: str = TipoEmissao.GAUSSIANA.value
    variancia_inicial: str = "GLOBAL"


@dataclass
class ParticaoConfig:
    L: int = 5
    B: Optional[int] = None           # None no CSG-MCMC: ⌈c/gap⌉ da matriz inicial
    nu: int = 0


@dataclass
class PlanoConfig:
    S: int = 16
    M: int = 4
    cotas: List[int] = field(default_factory=lambda: [4, 4, 4, 4])
    preprocessamento: str = Preprocessamento.NENHUM.value
    reinicios: int = 1


@dataclass
class AmostradorConfig:
    algoritmo: str = "csgmcmc"
    a: float = 1e-4
    b: float = 0.0
    gamma: float = 0.0
    injetar_ruido: bool = True
    n_iter: int = 1000
    n_passos: int = 1
    c_buffer: float = 1.0
    buffer_max: Optional[int] = None

    def sgld(self, seed: Optional[int]) -> SgldConfig:
        return SgldConfig(
            a=self.a, b=self.b, gamma=self.gamma, injetar_ruido=self.injetar_ruido,
            n_iter=self.n_iter, n_passos=self.n_passos, seed=seed,
            c_buffer=self.c_buffer, buffer_max=self.buffer_max,
        )


@dataclass
class AvaliacaoConfig:
    horizonte: int = 10
    nivel: float = 0.95
    cadencia: int = 25
    norma: str = "FROBENIUS"
    permutacoes: bool = True
    referencia: Optional[str] = None  # JSON com A de referência (dados reais)


@dataclass
class PriorConfig:
    tipo: str = TipoPrior.PLANA.value
    medias: Optional[List[float]] = None
    desvios: Optional[List[float]] = None

    def spec(self) -> PriorSpec:
        tipo = TipoPrior(self.tipo)
        if tipo is TipoPrior.PLANA:
            return PriorSpec()
        return PriorSpec(tipo, np.asarray(self.medias, dtype=float), np.asarray(self.desvios, dtype=float))


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    modelo: ModeloConfig = field(default_factory=ModeloConfig)
    particao: ParticaoConfig = field(default_factory=ParticaoConfig)
    plano: PlanoConfig = field(default_factory=PlanoConfig)
    amostrador: AmostradorConfig = field(default_factory=AmostradorConfig)
    avaliacao: AvaliacaoConfig = field(default_factory=AvaliacaoConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    seed: int = 0
    saida: str = "runs/experimento"
    threads: int = 1

    #----------------------------------------------------------------------------------------------
    # SEMENTES DERIVADAS (UMA POR ETAPA)
    #----------------------------------------------------------------------------------------------
    def sementes(self) -> Dict[str, int]:
        return {
            "dados": self.seed,
            "holdout": self.seed + 1,
            "agrupamento": self.seed + 2,
            "amostrador": self.seed + 3,
        }

    def para_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["sementes"] = self.sementes()
        return d

    def validar(self, T: Optional[int] = None) -> None:
        """Consistência interna; com T conhecido, confere também as cotas contra ⌊T/L⌋."""
        problemas: Dict[str, Any] = {}
        if self.amostrador.algoritmo not in ALGORITMOS:
            problemas["algoritmo"] = self.amostrador.algoritmo
        nome = self.dataset.nome.upper()
        if nome not in DATASETS_EMBUTIDOS and nome != "CSV":
            problemas["dataset"] = self.dataset.nome
        if nome == "CSV" and not self.dataset.csv:
            problemas["csv"] = "dataset CSV sem caminho"
        if self.modelo.K < 1:
            problemas["K"] = self.modelo.K
        if self.modelo.emissao.upper() not in {t.value for t in TipoEmissao}:
            problemas["emissao"] = self.modelo.emissao
        if self.modelo.variancia_inicial.upper() not in VARIANCIAS_INICIAIS:
            problemas["variancia_inicial"] = self.modelo.variancia_inicial
        if self.plano.preprocessamento.upper() not in {p.value for p in Preprocessamento}:
            problemas["preprocessamento"] = self.plano.preprocessamento
        if self.amostrador.algoritmo == "csgmcmc" and len(self.plano.cotas) != self.plano.M:
            problemas["cotas"] = {"M": self.plano.M, "cotas": list(self.plano.cotas)}
        if self.threads < 1:
            problemas["threads"] = self.threads
        if self.avaliacao.cadencia < 1:
            problemas["cadencia"] = self.avaliacao.cadencia
        if self.avaliacao.norma.upper() not in ("FROBENIUS", "ESPECTRAL"):
            problemas["norma"] = self.avaliacao.norma
        if self.avaliacao.permutacoes and self.modelo.K > MAX_K_PERMUTACOES:
            problemas["permutacoes"] = {"K": self.modelo.K, "max": MAX_K_PERMUTACOES}
        if T is not None and self.particao.L >= 1:
            n = T // self.particao.L
            total = sum(self.plano.cotas) if self.amostrador.algoritmo == "csgmcmc" else self.plano.S
            if total > n:
                problemas["tamanho_total"] = {"subamostra": total, "n_subcadeias": n}
        if problemas:
            raise ConfigInvalida("Configuração de experimento inconsistente.", detalhes=problemas)


def _secao(cls, dados: Any, nome: str):
    if dados is None:
        return cls()
    if not isinstance(dados, dict):
        raise ConfigInvalida(f"Seção '{nome}' deve ser um objeto.", detalhes={"secao": nome})
    conhecidos = set(cls.__dataclass_fields__)
    extras = sorted(set(dados) - conhecidos)
    if extras:
        raise ConfigInvalida(f"Chaves desconhecidas em '{nome}'.", detalhes={"secao": nome, "chaves": extras})
    try:
        return cls(**dados)
    except TypeError as e:
        raise ConfigInvalida(f"Seção '{nome}' inválida: {e}", detalhes={"secao": nome})


def config_de_dict(d: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigInvalida("Configuração deve ser um objeto JSON.")
    secoes = {
        "dataset": DatasetConfig, "modelo": ModeloConfig, "particao": ParticaoConfig,
        "plano": PlanoConfig, "amostrador": AmostradorConfig, "avaliacao": AvaliacaoConfig,
        "prior": PriorConfig,
    }
    escalares = {"seed", "saida", "threads", "sementes"}
    extras = sorted(set(d) - set(secoes) - escalares)
    if extras:
        raise ConfigInvalida("Chaves desconhecidas na configuração.", detalhes={"chaves": extras})
    cfg = ExperimentConfig(**{nome: _secao(cls, d.get(nome), nome) for nome, cls in secoes.items()})
    try:
        cfg = replace(
            cfg,
            seed=int(d.get("seed", cfg.seed)),
            saida=str(d.get("saida", cfg.saida)),
            threads=int(d.get("threads", cfg.threads)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigInvalida(f"Valor escalar inválido: {e}")
    cfg.validar()
    return cfg


def carregar_config(path: Path | str) -> ExperimentConfig:
    return config_de_dict(carregar_json(path))


def salvar_config(path: Path | str, cfg: ExperimentConfig) -> None:
    salvar_json(path, cfg.para_dict())


def sgld_de_config(cfg: ExperimentConfig) -> SgldConfig:
    try:
        return cfg.amostrador.sgld(cfg.sementes()["amostrador"])
    except CsgHmmError as e:
        raise ConfigInvalida(f"Amostrador inválido: {e}", detalhes=e.detalhes)
