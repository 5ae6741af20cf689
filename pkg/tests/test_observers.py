# tests/test_observers.py: observers de CSV, console e o logger singleton
import csv
import io
import json

from rich.console import Console

from csg_hmm.core.eventos import Evento, TipoEvento
from csg_hmm.core.logger import CsvLogger
from csg_hmm.core.observers import (
    ConsoleObserver,
    CsvObserverEventos,
    CsvObserverMetricas,
    CsvObserverTempos,
    CsvObserverTrace,
)


def _ler(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _iteracao(i: int) -> Evento:
    return Evento(TipoEvento.ITERACAO_CONCLUIDA, {
        "iteracao": i,
        "B": 3,
        "tempo_decorrido": 0.5 * i,
        "norma_grad": 1.0,
        "cabecalho": ["iteracao", "a_0_0"],
        "linha": {"iteracao": i, "a_0_0": "1.0"},
    })

#--------------------------------------------------------------------------------------------------
# LOGGER
#--------------------------------------------------------------------------------------------------
def test_logger_e_singleton():
    assert CsvLogger() is CsvLogger()


def test_logger_escreve_cabecalho_uma_vez(tmp_path):
    p = tmp_path / "sub" / "x.csv"
    log = CsvLogger()
    log.write_rows(p, ["a", "b"], [{"a": 1, "b": 2}, {"a": 3, "b": 4, "c": 9}])
    assert p.read_text(encoding="utf-8") == "a,b\n1,2\n3,4\n"
    log.reiniciar(p)
    assert not p.exists()

#--------------------------------------------------------------------------------------------------
# OBSERVERS CSV
#--------------------------------------------------------------------------------------------------
def test_trace_grava_so_iteracoes(tmp_path):
    obs = CsvObserverTrace(tmp_path / "trace.csv")
    obs.on_event(_iteracao(1))
    obs.on_event(Evento(TipoEvento.FASE_ALTERADA, {"antes": "A", "depois": "B"}))
    obs.on_event(_iteracao(2))
    linhas = _ler(tmp_path / "trace.csv")
    assert [l["iteracao"] for l in linhas] == ["1", "2"]
    assert list(linhas[0]) == ["iteracao", "a_0_0"]


def test_trace_reinicia_arquivo_antigo(tmp_path):
    p = tmp_path / "trace.csv"
    p.write_text("lixo\n", encoding="utf-8")
    CsvObserverTrace(p)
    assert not p.exists()


def test_tempos(tmp_path):
    obs = CsvObserverTempos(tmp_path / "tempos.csv")
    obs.on_event(_iteracao(4))
    assert _ler(tmp_path / "tempos.csv") == [{"iteracao": "4", "tempo_decorrido": "2.000000"}]


def test_metricas_ignora_outros_eventos(tmp_path):
    obs = CsvObserverMetricas(tmp_path / "metricas.csv")
    obs.on_event(_iteracao(1))
    assert not (tmp_path / "metricas.csv").exists()
    obs.on_event(Evento(TipoEvento.METRICA_CALCULADA, {"metrica": "erro_A", "iteracao": 1, "valor": 0.1}))
    [linha] = _ler(tmp_path / "metricas.csv")
    assert linha["metrica"] == "erro_A" and float(linha["valor"]) == 0.1


def test_eventos_omitem_linha_do_trace(tmp_path):
    obs = CsvObserverEventos(tmp_path / "eventos.csv")
    obs.on_event(_iteracao(1))
    [linha] = _ler(tmp_path / "eventos.csv")
    assert linha["tipo"] == "ITERACAO_CONCLUIDA"
    extra = json.loads(linha["extra"])
    assert "linha" not in extra and "cabecalho" not in extra
    assert extra["iteracao"] == 1

#--------------------------------------------------------------------------------------------------
# CONSOLE
#--------------------------------------------------------------------------------------------------
def test_console_mostra_fase_e_filtra_iteracoes():
    saida = io.StringIO()
    obs = ConsoleObserver(Console(file=saida, width=120), a_cada=2)
    obs.on_event(Evento(TipoEvento.FASE_ALTERADA, {"antes": "CONFIGURADO", "depois": "DADOS_CARREGADOS"}))
    obs.on_event(_iteracao(1))
    obs.on_event(_iteracao(2))
    texto = saida.getvalue()
    assert "fase" in texto and "DADOS_CARREGADOS" in texto
    assert "iteração 2" in texto
    assert "iteração 1 " not in texto
