# csg_hmm/core/observers.py: observers do experimento (console e CSVs do diretório de execução)
from __future__ import annotations
import json
from abc import ABC, abstractmethod
from pathlib import Path

from rich.console import Console

from csg_hmm.core.eventos import Evento, TipoEvento
from csg_hmm.core.logger import CsvLogger
#--------------------------------------------------------------------------------------------------
# CLASSE BASE PARA OBSERVERS (PADRÃO OBSERVER)
#--------------------------------------------------------------------------------------------------
class Observer(ABC):
    # falha de um observer obrigatório interrompe a execução
    obrigatorio: bool = False

    @abstractmethod
    def on_event(self, evt: Evento) -> None:
        pass

#--------------------------------------------------------------------------------------------------
# OBSERVER PARA GRAVAR O TRACE DOS PARÂMETROS EM CSV
#--------------------------------------------------------------------------------------------------
class CsvObserverTrace(Observer):
    """Uma linha por iteração externa: iteracao, B, n_centros, A por linhas, emissão, norma_grad.

    Sem coluna de relógio: mesma semente gera o mesmo arquivo byte a byte.
    """
    obrigatorio = True

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.logger = CsvLogger()
        self.logger.reiniciar(self.path)

    def on_event(self, evt: Evento) -> None:
        if evt.tipo is not TipoEvento.ITERACAO_CONCLUIDA:
            return
        p = evt.payload
        self.logger.write_row(self.path, p["cabecalho"], p["linha"])

#--------------------------------------------------------------------------------------------------
# OBSERVER PARA GRAVAR O TEMPO DE PAREDE POR ITERAÇÃO
#--------------------------------------------------------------------------------------------------
class CsvObserverTempos(Observer):
    obrigatorio = True
    HEADERS = ["iteracao", "tempo_decorrido"]

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.logger = CsvLogger()
        self.logger.reiniciar(self.path)

    def on_event(self, evt: Evento) -> None:
        if evt.tipo is not TipoEvento.ITERACAO_CONCLUIDA:
            return
        p = evt.payload
        self.logger.write_row(self.path, self.HEADERS, {
            "iteracao": p.get("iteracao"),
            "tempo_decorrido": f"{p.get('tempo_decorrido', 0.0):.6f}",
        })

#--------------------------------------------------------------------------------------------------
# OBSERVER PARA GRAVAR MÉTRICAS EM CSV
#--------------------------------------------------------------------------------------------------
class CsvObserverMetricas(Observer):
    """Formato longo: metrica,iteracao,tempo_decorrido,valor."""
    obrigatorio = True
    HEADERS = ["metrica", "iteracao", "tempo_decorrido", "valor"]

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.logger = CsvLogger()
        self.logger.reiniciar(self.path)

    def on_event(self, evt: Evento) -> None:
        if evt.tipo is not TipoEvento.METRICA_CALCULADA:
            return
        p = evt.payload
        self.logger.write_row(self.path, self.HEADERS, {
            "metrica": p.get("metrica"),
            "iteracao": p.get("iteracao"),
            "tempo_decorrido": f"{p.get('tempo_decorrido', 0.0):.6f}",
            "valor": repr(float(p.get("valor"))),
        })

#--------------------------------------------------------------------------------------------------
# OBSERVER PARA GRAVAR TODOS OS EVENTOS EM CSV
#--------------------------------------------------------------------------------------------------
class CsvObserverEventos(Observer):
    """Grava os eventos num CSV geral (a linha do trace fica só no trace.csv)."""
    obrigatorio = True
    HEADERS = ["timestamp", "tipo", "extra"]
    OMITIDOS = {"linha", "cabecalho"}

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.logger = CsvLogger()
        self.logger.reiniciar(self.path)

    def on_event(self, evt: Evento) -> None:
        extra = {k: v for k, v in evt.payload.items() if k not in self.OMITIDOS}
        self.logger.write_row(self.path, self.HEADERS, {
            "timestamp": evt.timestamp,
            "tipo": evt.tipo.name,
            "extra": json.dumps(extra, ensure_ascii=False, default=str),
        })

#--------------------------------------------------------------------------------------------------
# OBSERVER DE CONSOLE (RICH)
#--------------------------------------------------------------------------------------------------
class ConsoleObserver(Observer):
    """Mostra fases, métricas e divergências; iterações só a cada `a_cada`."""
    def __init__(self, console: Console | None = None, a_cada: int = 100) -> None:
        self.console = console or Console()
        self.a_cada = max(1, a_cada)

    def on_event(self, evt: Evento) -> None:
        p = evt.payload
        if evt.tipo is TipoEvento.FASE_ALTERADA:
            self.console.print(f"[bold cyan]fase[/]: {p.get('antes')} -> [bold]{p.get('depois')}[/]")
        elif evt.tipo is TipoEvento.AGRUPAMENTO_AJUSTADO:
            self.console.print(f"[magenta]agrupamento[/]: M={p.get('M')} tamanhos={p.get('tamanhos')} wcss={p.get('wcss'):.4g}")
        elif evt.tipo is TipoEvento.ITERACAO_CONCLUIDA:
            if p.get("iteracao", 0) % self.a_cada == 0:
                self.console.print(
                    f"[dim]iteração {p.get('iteracao')}  B={p.get('B')}  "
                    f"|∇U|={p.get('norma_grad', float('nan')):.4g}  t={p.get('tempo_decorrido', 0.0):.2f}s[/]"
                )
        elif evt.tipo is TipoEvento.METRICA_CALCULADA:
            if p.get("final"):
                self.console.print(f"[green]{p.get('metrica')}[/] = {p.get('valor'):.6g}")
        elif evt.tipo is TipoEvento.DIVERGENCIA:
            self.console.print(f"[bold red]divergência na iteração {p.get('iteracao')}[/]: {p.get('mensagem')}")
        elif evt.tipo is TipoEvento.ERRO:
            self.console.print(f"[bold red]erro[/]: {p.get('tipo')}: {p.get('mensagem')}")
