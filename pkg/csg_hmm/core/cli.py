# csg_hmm/core/cli.py: interface de linha de comando (generate, run, variance-sweep, eval-trace)
from __future__ import annotations
import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table
from rich.traceback import install as rich_traceback

from csg_hmm.core.avaliacao import NormaMatriz
from csg_hmm.core.dados import T_PADRAO, generate_dataset
from csg_hmm.core.erros import ConfigInvalida, CsgHmmError
from csg_hmm.core.eventos import Evento, TipoEvento
from csg_hmm.core.experimento import ALOCACOES, PONTOS_VARREDURA, run_experiment, variance_sweep
from csg_hmm.core.observers import ConsoleObserver, Observer
from csg_hmm.core.persistencia import (
    ALGORITMOS,
    DATASETS_EMBUTIDOS,
    VARIANCIAS_INICIAIS,
    ExperimentConfig,
    carregar_config,
    carregar_matriz_referencia,
    carregar_params,
    salvar_json,
)
from csg_hmm.core.relatorios import ler_serie, ler_variancias, recalcular_metricas, resumo_final

console = Console()              # tipo: Console
rich_traceback(show_locals=False)

#--------------------------------------------------------------------------------------------------
# MAPEAMENTO FLAG -> CAMPO DA CONFIGURAÇÃO
#--------------------------------------------------------------------------------------------------
CAMPOS: Dict[str, Tuple[str, str]] = {
    "dataset": ("dataset", "nome"),
    "T": ("dataset", "T"),
    "csv": ("dataset", "csv"),
    "coluna": ("dataset", "coluna"),
    "cabecalho": ("dataset", "cabecalho"),
    "max_T": ("dataset", "max_T"),
    "holdout": ("dataset", "holdout"),
    "K": ("modelo", "K"),
    "emissao": ("modelo", "emissao"),
    "variancia_inicial": ("modelo", "variancia_inicial"),
    "L": ("particao", "L"),
    "B": ("particao", "B"),
    "nu": ("particao", "nu"),
    "S": ("plano", "S"),
    "M": ("plano", "M"),
    "cotas": ("plano", "cotas"),
    "preprocessamento": ("plano", "preprocessamento"),
    "reinicios": ("plano", "reinicios"),
    "algoritmo": ("amostrador", "algoritmo"),
    "a": ("amostrador", "a"),
    "b": ("amostrador", "b"),
    "gamma": ("amostrador", "gamma"),
    "n_iter": ("amostrador", "n_iter"),
    "n_passos": ("amostrador", "n_passos"),
    "c_buffer": ("amostrador", "c_buffer"),
    "buffer_max": ("amostrador", "buffer_max"),
    "horizonte": ("avaliacao", "horizonte"),
    "nivel": ("avaliacao", "nivel"),
    "cadencia": ("avaliacao", "cadencia"),
    "norma": ("avaliacao", "norma"),
    "referencia": ("avaliacao", "referencia"),
}
ESCALARES = ("seed", "saida", "threads")


def _lista_int(s: str) -> List[int]:
    """'4,8,16' -> [4, 8, 16]"""
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de inteiros inválida: {s!r}") from None


def aplicar_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Flags explícitas sobrescrevem os campos carregados do JSON."""
    secoes: Dict[str, Dict[str, Any]] = {}
    valores = vars(args)
    for dest, (secao, campo) in CAMPOS.items():
        v = valores.get(dest)
        if v is not None:
            secoes.setdefault(secao, {})[campo] = v
    if valores.get("sem_ruido"):
        secoes.setdefault("amostrador", {})["injetar_ruido"] = False
    if valores.get("sem_permutacoes"):
        secoes.setdefault("avaliacao", {})["permutacoes"] = False

    ds = secoes.get("dataset", {})
    if "csv" in ds and "nome" not in ds:
        ds["nome"] = "CSV"
    if "nome" in ds:
        ds["nome"] = str(ds["nome"]).upper()

    novo = replace(cfg, **{s: replace(getattr(cfg, s), **campos) for s, campos in secoes.items()})
    escalares = {k: valores[k] for k in ESCALARES if valores.get(k) is not None}
    novo = replace(novo, **escalares)
    novo.validar()
    return novo


def config_dos_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = carregar_config(args.config) if args.config else ExperimentConfig()
    return aplicar_overrides(cfg, args)

#--------------------------------------------------------------------------------------------------
# PARSER
#--------------------------------------------------------------------------------------------------
def _flags_experimento(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="Arquivo de configuração JSON")
    p.add_argument("--seed", type=int, default=None, help="Semente mestre (controla toda a aleatoriedade)")
    p.add_argument("--saida", type=str, default=None, help="Diretório da execução")
    p.add_argument("--threads", type=int, default=None, help="Máximo de workers")

    g = p.add_argument_group("dataset")
    g.add_argument("--dataset", type=str, default=None, help="BD | ID | BERN | RARE2 | CSV")
    g.add_argument("--T", type=int, default=None)
    g.add_argument("--csv", type=str, default=None, help="Série univariada (um valor por linha)")
    g.add_argument("--coluna", type=int, default=None)
    g.add_argument("--cabecalho", action="store_true", default=None)
    g.add_argument("--max-T", dest="max_T", type=int, default=None)
    g.add_argument("--holdout", type=int, default=None)

    g = p.add_argument_group("modelo")
    g.add_argument("--K", type=int, default=None)
    g.add_argument("--emissao", type=str.upper, default=None, choices=["GAUSSIANA", "BERNOULLI"])
    g.add_argument("--variancia-inicial", dest="variancia_inicial", type=str.upper, default=None,
                   choices=list(VARIANCIAS_INICIAIS), help="GLOBAL (série inteira) | INTRA (clusters)")

    g = p.add_argument_group("partição e plano")
    g.add_argument("--L", type=int, default=None)
    g.add_argument("--B", type=int, default=None)
    g.add_argument("--nu", type=int, default=None)
    g.add_argument("--S", type=int, default=None)
    g.add_argument("--M", type=int, default=None)
    g.add_argument("--cotas", type=_lista_int, default=None, help="b_1..b_M separados por vírgula")
    g.add_argument("--preprocessamento", type=str.upper, default=None, choices=["NENHUM", "ORDENAR"])
    g.add_argument("--reinicios", type=int, default=None)

    g = p.add_argument_group("amostrador")
    g.add_argument("--algoritmo", type=str.lower, default=None, choices=list(ALGORITMOS))
    g.add_argument("--a", type=float, default=None)
    g.add_argument("--b", type=float, default=None)
    g.add_argument("--gamma", type=float, default=None)
    g.add_argument("--sem-ruido", dest="sem_ruido", action="store_true")
    g.add_argument("--n-iter", dest="n_iter", type=int, default=None)
    g.add_argument("--n-passos", dest="n_passos", type=int, default=None)
    g.add_argument("--c-buffer", dest="c_buffer", type=float, default=None)
    g.add_argument("--buffer-max", dest="buffer_max", type=int, default=None)

    g = p.add_argument_group("avaliação")
    g.add_argument("--horizonte", type=int, default=None)
    g.add_argument("--nivel", type=float, default=None)
    g.add_argument("--cadencia", type=int, default=None)
    g.add_argument("--norma", type=str.upper, default=None, choices=[n.value for n in NormaMatriz])
    g.add_argument("--referencia", type=str, default=None, help="JSON com a matriz A de referência")
    g.add_argument("--sem-permutacoes", dest="sem_permutacoes", action="store_true")


def criar_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csg_hmm",
        description="SG-MCMC com subamostragem estratificada por agrupamento para HMMs",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="comando", required=True)

    p = sub.add_parser("generate", help="Gera um dataset sintético embutido", allow_abbrev=False)
    p.add_argument("--dataset", type=str.upper, required=True, choices=list(DATASETS_EMBUTIDOS))
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--saida", type=str, default=None, help="Diretório de destino (padrão: data/<dataset>)")

    p = sub.add_parser("run", help="Executa um experimento completo", allow_abbrev=False)
    _flags_experimento(p)
    p.add_argument("--a-cada", dest="a_cada", type=int, default=100, help="Iterações entre linhas no console")

    p = sub.add_parser("variance-sweep", help="Variância do gradiente numa grade (S, L)", allow_abbrev=False)
    _flags_experimento(p)
    p.add_argument("--S-grid", dest="S_grid", type=_lista_int, required=True)
    p.add_argument("--L-grid", dest="L_grid", type=_lista_int, required=True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--params", type=str, default=None, help="JSON de θ fixo (padrão: parâmetros verdadeiros)")
    p.add_argument("--ponto", type=str.upper, default="VERDADEIRO", choices=list(PONTOS_VARREDURA),
                   help="θ fixo sem --params: parâmetros verdadeiros ou ponto inicial dos amostradores")
    p.add_argument("--alocacao", type=str.upper, default="NEYMAN", choices=list(ALOCACOES),
                   help="Cotas do estratificado: NEYMAN (piloto por cluster), PROPORCIONAL ou IGUAL")

    p = sub.add_parser("eval-trace", help="Recalcula métricas a partir de um trace salvo", allow_abbrev=False)
    p.add_argument("pasta", type=str, help="Diretório de uma execução")
    p.add_argument("--holdout", type=str, default=None, help="CSV do holdout (padrão: holdout.csv da pasta)")
    p.add_argument("--referencia", type=str, default=None, help="JSON com A de referência")
    p.add_argument("--cadencia", type=int, default=25)
    p.add_argument("--horizonte", type=int, default=10)
    p.add_argument("--norma", type=str.upper, default="FROBENIUS", choices=[n.value for n in NormaMatriz])
    p.add_argument("--sem-permutacoes", dest="sem_permutacoes", action="store_true")
    p.add_argument("--destino", type=str, default=None)
    return parser

#--------------------------------------------------------------------------------------------------
# HELPERS VISUAIS (RICH)
#--------------------------------------------------------------------------------------------------
def header(titulo: str) -> None:
    console.rule(f"[italic bright_white]csg_hmm: {titulo}[/]")


class ProgressoObserver(Observer):
    """Barra de progresso alimentada por ITERACAO_CONCLUIDA."""
    def __init__(self, progresso: Progress, total: int) -> None:
        self.progresso = progresso
        self.tarefa = progresso.add_task("amostrando", total=total)

    def on_event(self, evt: Evento) -> None:
        if evt.tipo is TipoEvento.ITERACAO_CONCLUIDA:
            self.progresso.update(self.tarefa, completed=evt.payload.get("iteracao", 0))


def _tabela_metricas(valores: Dict[str, float], titulo: str) -> Table:
    t = Table(title=titulo, box=box.SIMPLE_HEAVY)
    t.add_column("Métrica", style="cyan")
    t.add_column("Valor", justify="right")
    for nome, v in valores.items():
        t.add_row(nome, f"{v:.6g}")
    return t


def _reportar_erro(e: CsgHmmError, pasta: Optional[Path]) -> int:
    """Painel com o erro; grava erro.json na pasta se ela existe e o pipeline ainda não gravou."""
    console.print(Panel.fit(
        f"[bold red]{type(e).__name__}[/]: {e}\n[dim]{e.detalhes or {}}[/]",
        title="Erro", border_style="red",
    ))
    if pasta is not None and pasta.is_dir() and not (pasta / "erro.json").exists():
        try:
            salvar_json(pasta / "erro.json", e.para_dict())
        except CsgHmmError:
            pass
    return 1

#--------------------------------------------------------------------------------------------------
# SUBCOMANDOS
#--------------------------------------------------------------------------------------------------
def cmd_generate(args: argparse.Namespace) -> int:
    header("generate")
    destino = Path(args.saida or Path("data") / args.dataset)
    T = args.T if args.T is not None else T_PADRAO[args.dataset]
    with console.status(f"Simulando {args.dataset} (T={T})..."):
        gerado = generate_dataset(args.dataset, T, args.seed, destino)
    t = Table(title=f"Dataset {gerado.nome}", box=box.SIMPLE)
    t.add_column("Arquivo", style="cyan")
    t.add_column("Caminho")
    t.add_row("observações", str(gerado.observacoes))
    t.add_row("latentes", str(gerado.latentes))
    t.add_row("parâmetros", str(gerado.parametros))
    console.print(t)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    header("run")
    cfg = config_dos_args(args)
    console.print(Panel.fit(
        f"[bold]{cfg.amostrador.algoritmo}[/] em [cyan]{cfg.dataset.nome}[/]  seed={cfg.seed}  saída={cfg.saida}",
        border_style="cyan",
    ))
    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        TimeElapsedColumn(),
        console=console,
    ) as progresso:
        observers = [ConsoleObserver(console, args.a_cada), ProgressoObserver(progresso, cfg.amostrador.n_iter)]
        exp = run_experiment(cfg, observers=observers)

    console.print(_tabela_metricas(resumo_final(exp.metricas), "Métricas finais"))
    if exp.intervalos:
        t = Table(title=f"Intervalos preditivos ({cfg.avaliacao.nivel:.0%})", box=box.SIMPLE)
        t.add_column("k", justify="right", style="dim")
        t.add_column("Inferior", justify="right")
        t.add_column("Superior", justify="right")
        for linha in exp.intervalos:
            t.add_row(str(linha["k"]), f"{linha['inferior']:.4g}", f"{linha['superior']:.4g}")
        console.print(t)
    console.print(Panel.fit(f"[bold green]OK[/] artefatos em [cyan]{exp.saida}[/]", border_style="green"))
    return 0


def cmd_variance_sweep(args: argparse.Namespace) -> int:
    header("variance-sweep")
    cfg = config_dos_args(args)
    if args.reps < 2:
        raise ConfigInvalida("São necessárias pelo menos 2 repetições.", detalhes={"reps": args.reps})
    params = carregar_params(args.params) if args.params else None
    with console.status(f"Varrendo S={args.S_grid} x L={args.L_grid} ({args.reps} repetições)..."):
        resumo = variance_sweep(
            cfg, args.S_grid, args.L_grid, args.reps, params=params, ponto=args.ponto, alocacao=args.alocacao,
        )

    t = Table(title="Variância média do gradiente", box=box.SIMPLE_HEAVY)
    t.add_column("Estimador", style="magenta")
    t.add_column("S", justify="right")
    t.add_column("L", justify="right")
    t.add_column("Variância média", justify="right")
    for r in ler_variancias(resumo):
        t.add_row(r["estimador"], str(r["S"]), str(r["L"]), f"{r['media_variancia']:.6g}")
    console.print(t)
    console.print(Panel.fit(f"[bold green]OK[/] [cyan]{resumo}[/]", border_style="green"))
    return 0


def cmd_eval_trace(args: argparse.Namespace) -> int:
    header("eval-trace")
    holdout = ler_serie(args.holdout) if args.holdout else None
    A_ref = carregar_matriz_referencia(args.referencia) if args.referencia else None
    linhas = recalcular_metricas(
        args.pasta, holdout, A_ref, args.cadencia, args.horizonte,
        NormaMatriz(args.norma), not args.sem_permutacoes, args.destino,
    )
    console.print(_tabela_metricas(resumo_final(linhas), f"Métricas recalculadas ({len(linhas)} linhas)"))
    return 0


COMANDOS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "variance-sweep": cmd_variance_sweep,
    "eval-trace": cmd_eval_trace,
}

#--------------------------------------------------------------------------------------------------
# MAIN CLI
#--------------------------------------------------------------------------------------------------
def _pasta_saida(args: argparse.Namespace) -> Optional[Path]:
    if args.comando == "eval-trace":
        return Path(args.pasta)
    if getattr(args, "saida", None):
        return Path(args.saida)
    if args.comando in ("run", "variance-sweep") and getattr(args, "config", None):
        try:
            return Path(carregar_config(args.config).saida)
        except CsgHmmError:
            return None
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Função principal do CLI; devolve o status de saída (0 só se todos os artefatos foram escritos)."""
    args = criar_parser().parse_args(argv)  # erros de argumento saem com status 2
    try:
        return COMANDOS[args.comando](args)
    except CsgHmmError as e:
        return _reportar_erro(e, _pasta_saida(args))


if __name__ == "__main__":
    sys.exit(main())
