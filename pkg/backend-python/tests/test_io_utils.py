# test_io_utils.py
# ---------------------------------------------------------------
# Testes para utils/io_utils.py e utils/log_utils.py
# Objetivo: formatos dos CSVs, leitura das amostras de mercado,
# manifesto, relatório e arquivo de log.
# ---------------------------------------------------------------

import json
import logging
import os

import numpy as np
import pytest

from src.errors import ConfigError
from src.path_simulator import GridSchedule, PathBatch
from utils.config_utils import build_config, config_hash
from utils.io_utils import (
    MARKET_HEADER,
    command_folder,
    read_market_samples,
    write_csv,
    write_landscape,
    write_manifest,
    write_market_samples,
    write_path_dump,
    write_report,
)
from utils.log_utils import configurar_logging


# ---- Test 1: CSV formatting ----

def test_write_csv_formats_values(tmp_path):
    path = write_csv(str(tmp_path / "a.csv"), ["x", "y", "z", "w"],
                     [[1 / 3, float("nan"), True, np.int64(4)]])
    lines = (tmp_path / "a.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "x,y,z,w"
    assert lines[1] == "0.333333333333,nan,true,4"
    assert "\\" not in path


def test_command_folder_creates_directory(tmp_path):
    folder = command_folder(str(tmp_path), "smile")
    assert os.path.isdir(folder)
    assert folder.endswith("/smile")


def test_landscape_rows(tmp_path):
    values = np.array([[0.0, np.nan], [1.5, -2.0]])
    write_landscape(str(tmp_path / "p.csv"), ("H", "eta"), [0.05, 0.09], [1.5, 2.3], values)
    lines = (tmp_path / "p.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "H,eta,log_loss"
    assert len(lines) == 5
    assert lines[2] == "0.05,2.3,nan"


# ---- Test 2: Market samples ----

def test_market_samples_round_trip(tmp_path):
    samples = {0.5: np.array([0.9, 1.1, 1.25]), 0.3: np.array([1.0, 0.95, 1.05])}
    path = write_market_samples(str(tmp_path / "mercado.csv"), samples)
    lines = (tmp_path / "mercado.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(MARKET_HEADER)
    assert lines[1].startswith("0.3,")
    loaded = read_market_samples(path)
    assert sorted(loaded) == [0.3, 0.5]
    for T, values in samples.items():
        np.testing.assert_array_equal(loaded[T], values)


def test_market_samples_keep_every_bit(tmp_path):
    rng = np.random.default_rng(5)
    samples = {1 / 3: np.exp(0.2 * rng.standard_normal(64)), 0.1: np.array([1 / 3, 2 / 3, 1e-17])}
    path = write_market_samples(str(tmp_path / "mercado.csv"), samples)
    loaded = read_market_samples(path)
    assert sorted(loaded) == sorted(samples)
    for T, values in samples.items():
        np.testing.assert_array_equal(loaded[T], values)
    text = (tmp_path / "mercado.csv").read_text(encoding="utf-8")
    assert "\n0.3333333333333333," in text


@pytest.mark.parametrize("content", [
    "T,S\n0.5,1.0\n",
    "maturity,value\n0.5,abc\n",
    "maturity,value\n0.5\n",
    "maturity,value\n0.5,inf\n",
    "maturity,value\n",
    "",
])
def test_market_samples_errors(tmp_path, content):
    path = tmp_path / "ruim.csv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        read_market_samples(str(path))


def test_missing_market_file(tmp_path):
    with pytest.raises(ConfigError):
        read_market_samples(str(tmp_path / "ausente.csv"))
    with pytest.raises(ConfigError):
        read_market_samples(None)


# ---- Test 3: Path dump ----

def test_path_dump_requires_stored_paths(tmp_path):
    schedule = GridSchedule(2, 0.5, (1.0,))
    s = np.ones(3)
    batch = PathBatch("msoe", schedule, 3, 0, 0, {2: s}, {2: s}, {2: s})
    with pytest.raises(ConfigError):
        write_path_dump(str(tmp_path / "c.csv"), batch, 10)

    batch.price_paths = np.ones((3, 3))
    batch.variance_paths = np.full((3, 3), 0.04)
    write_path_dump(str(tmp_path / "c.csv"), batch, 2)
    lines = (tmp_path / "c.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "path,step,t,S,V"
    assert len(lines) == 1 + 2 * 3


# ---- Test 4: Manifest, report and log ----

def test_manifest_contents(tmp_path):
    cfg = build_config(None)
    path = write_manifest(str(tmp_path), "smile", cfg, [str(tmp_path / "z.csv"), str(tmp_path / "a.csv")])
    manifest = json.loads(open(path, encoding="utf-8").read())
    assert manifest["command"] == "smile"
    assert manifest["config_sha256"] == config_hash(cfg)
    assert manifest["seed"] == cfg["run"]["seed"]
    assert manifest["files"] == ["a.csv", "z.csv"]
    assert set(manifest["versions"]) == {"roughvol", "python", "numpy", "scipy"}


def test_report_lists_summary_and_files(tmp_path):
    path = write_report(str(tmp_path), "Resultado", {"N": 12, "erro": 0.5},
                        ["x/nodes.csv"], {"Extra": ["- a"]})
    text = open(path, encoding="utf-8").read()
    assert text.startswith("# Resultado\n")
    assert "- N: **12**" in text
    assert "## Extra\n- a" in text
    assert "- `nodes.csv`" in text


def test_configurar_logging_writes_file(tmp_path):
    log_file = configurar_logging(str(tmp_path), "teste")
    logging.info("mensagem de teste")
    for handler in logging.root.handlers:
        handler.flush()
    assert os.path.basename(log_file) == "teste.log"
    assert "mensagem de teste" in open(log_file, encoding="utf-8").read()
