# tests/test_cli.py: subcomandos do CLI de ponta a ponta (generate, run, eval-trace, variance-sweep)
import json
from pathlib import Path

import numpy as np
import pytest

from csg_hmm.core.cli import config_dos_args, criar_parser, main
from csg_hmm.core.eventos import TipoEvento
from csg_hmm.core.observers import CsvObserverTempos
from csg_hmm.core.relatorios import ler_metricas, ler_trace, ler_variancias

CONFIG_BD = Path(__file__).resolve().parent.parent / "data" / "configs" / "bd_mesa.json"


def _run(pasta, *extra):
    return main([
        "run", "--dataset", "BD", "--T", "500", "--holdout", "50", "--M", "2", "--cotas", "2,2",
        "--n-iter", "4", "--a", "1e-6", "--cadencia", "2", "--horizonte", "3", "--seed", "1",
        "--saida", str(pasta), *extra,
    ])


def test_generate(tmp_path):
    assert main(["generate", "--dataset", "bern", "--T", "50", "--saida", str(tmp_path)]) == 0
    assert np.loadtxt(tmp_path / "observacoes.csv").size == 50
    assert (tmp_path / "latentes.csv").exists()
    assert json.loads((tmp_path / "parametros_verdadeiros.json").read_text(encoding="utf-8"))["emissao"]["tipo"] == "BERNOULLI"


def test_run_escreve_trace(tmp_path):
    assert _run(tmp_path / "run") == 0
    assert len(ler_trace(tmp_path / "run" / "trace.csv")) == 4
    assert not (tmp_path / "run" / "erro.json").exists()


def test_flags_sobrescrevem_config():
    args = criar_parser().parse_args(["run", "--config", str(CONFIG_BD), "--T", "500", "--sem-ruido", "--algoritmo", "SGMCMC"])
    cfg = config_dos_args(args)
    assert cfg.dataset.T == 500 and cfg.dataset.nome == "BD"
    assert cfg.amostrador.injetar_ruido is False
    assert cfg.amostrador.algoritmo == "sgmcmc"
    assert cfg.plano.cotas == [4, 4, 4, 4]


def test_eval_trace_reproduz_metricas(tmp_path):
    pasta = tmp_path / "run"
    assert _run(pasta) == 0
    assert main(["eval-trace", str(pasta), "--cadencia", "2", "--horizonte", "3"]) == 0
    originais = {(m["metrica"], m["iteracao"]): m["valor"] for m in ler_metricas(pasta / "metricas.csv")}
    recalculadas = ler_metricas(pasta / "metricas_recalculadas.csv")
    assert {m["iteracao"] for m in recalculadas} == {1, 2, 4}
    for m in recalculadas:
        assert m["valor"] == pytest.approx(originais[(m["metrica"], m["iteracao"])], rel=1e-12)


def test_variance_sweep(tmp_path):
    codigo = main([
        "variance-sweep", "--dataset", "BD", "--T", "20", "--M", "2", "--cotas", "2,2",
        "--S-grid", "4", "--L-grid", "5", "--reps", "2", "--saida", str(tmp_path),
    ])
    assert codigo == 0
    assert all(l["media_variancia"] == 0.0 for l in ler_variancias(tmp_path / "variancias.csv"))


def test_variance_sweep_com_alocacao_e_variancia_inicial(tmp_path):
    args = criar_parser().parse_args([
        "variance-sweep", "--S-grid", "4", "--L-grid", "5", "--alocacao", "proporcional",
        "--variancia-inicial", "intra",
    ])
    assert args.alocacao == "PROPORCIONAL"
    assert config_dos_args(args).modelo.variancia_inicial == "INTRA"
    assert main([
        "variance-sweep", "--dataset", "BD", "--T", "20", "--M", "2", "--cotas", "2,2", "--alocacao", "IGUAL",
        "--S-grid", "4", "--L-grid", "5", "--reps", "2", "--saida", str(tmp_path),
    ]) == 0
    with pytest.raises(SystemExit):
        main(["variance-sweep", "--S-grid", "4", "--L-grid", "5", "--alocacao", "SORTEIO"])


def test_variance_sweep_com_uma_repeticao(tmp_path):
    assert main([
        "variance-sweep", "--dataset", "BD", "--T", "20", "--M", "2", "--cotas", "2,2",
        "--S-grid", "4", "--L-grid", "5", "--reps", "1", "--saida", str(tmp_path),
    ]) == 1


def test_argumento_invalido_sai_com_2():
    with pytest.raises(SystemExit) as info:
        main(["run", "--n-iter", "muitas"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["generate", "--dataset", "XYZ"])


def test_dataset_desconhecido_grava_erro(tmp_path):
    pasta = tmp_path / "run"
    pasta.mkdir()
    assert main(["run", "--dataset", "XYZ", "--saida", str(pasta)]) == 1
    erro = json.loads((pasta / "erro.json").read_text(encoding="utf-8"))
    assert erro["tipo"] == "ConfigInvalida"
    assert erro["detalhes"]["dataset"] == "XYZ"


def test_eval_trace_em_pasta_inexistente(tmp_path):
    assert main(["eval-trace", str(tmp_path / "nada")]) == 1


def test_trace_inutilizavel_sai_com_erro(tmp_path):
    pasta = tmp_path / "run"
    (pasta / "trace.csv").mkdir(parents=True)
    assert _run(pasta) == 1
    erro = json.loads((pasta / "erro.json").read_text(encoding="utf-8"))
    assert erro["tipo"] == "IoError"
    assert erro["detalhes"]["caminho"].endswith("trace.csv")


def test_falha_do_observer_de_arquivo_no_meio_da_execucao(tmp_path, monkeypatch):
    def falhar(self, evt):
        if evt.tipo is TipoEvento.ITERACAO_CONCLUIDA and evt.payload["iteracao"] == 2:
            raise OSError("disco cheio")

    monkeypatch.setattr(CsvObserverTempos, "on_event", falhar)
    pasta = tmp_path / "run"
    assert _run(pasta) == 1
    erro = json.loads((pasta / "erro.json").read_text(encoding="utf-8"))
    assert erro["tipo"] == "IoError"
    assert erro["detalhes"]["observer"] == "CsvObserverTempos"
    assert not (pasta / "intervalos.csv").exists()
