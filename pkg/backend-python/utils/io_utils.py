# io_utils.py
# ---------------------------------------------------------------
# Leitura e escrita dos artefatos das execuções:
#   - CSVs de smile/superfície, barreiras, trajetória e paisagem
#   - Amostras de mercado ("maturity,value") e despejo de caminhos
#   - manifest.json (hash da configuração e versões) e relatorio.md
# Nenhum artefato leva data/hora: reexecuções geram arquivos idênticos.
# ---------------------------------------------------------------

import csv
import json
import math
import os
import platform

import numpy as np
import scipy

from src import __version__
from src.errors import ConfigError
from utils.config_utils import config_hash

VOL_HEADER = ["scheme", "T", "k", "strike", "price", "stderr", "iv", "valid"]
MARKET_HEADER = ["maturity", "value"]
PATH_HEADER = ["path", "step", "t", "S", "V"]


# Padronizar os caminhos entre Sistemas Operacionais:
def normalize_path(p):
    return p.replace("\\", "/")


def command_folder(out_dir, command):
    folder = os.path.join(out_dir, command)
    os.makedirs(folder, exist_ok=True)
    return normalize_path(folder)


def _fmt(value, exact=False):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        # repr é a menor grafia que relê o mesmo double
        return repr(float(value)) if exact else f"{float(value):.12g}"
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows, exact=False):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v, exact) for v in row])
    return normalize_path(path)


def write_vol_points(path, points_by_scheme):
    rows = []
    for scheme, points in points_by_scheme.items():
        for p in points:
            rows.append([scheme, p.maturity, p.log_strike, p.strike, p.price, p.stderr, p.iv, p.valid])
    return write_csv(path, VOL_HEADER, rows)


def write_trajectory(path, run):
    header = ["iter", "loss", "lr", "N"] + list(run.names)
    rows = [[r.iteration, r.loss, r.lr, r.n_terms] + list(r.params) for r in run.records]
    return write_csv(path, header, rows)


def write_landscape(path, names, xs, ys, values):
    rows = []
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            rows.append([x, y, values[i, j]])
    return write_csv(path, [names[0], names[1], "log_loss"], rows)


def write_market_samples(path, samples):
    rows = []
    for T in sorted(samples):
        rows.extend([T, v] for v in samples[T])
    return write_csv(path, MARKET_HEADER, rows, exact=True)


def read_market_samples(path):
    if not path or not os.path.exists(path):
        raise ConfigError(f"Arquivo de amostras de mercado não encontrado: {path}")
    samples = {}
    with open(path, "r", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != MARKET_HEADER:
            raise ConfigError(f"{path}: cabeçalho esperado 'maturity,value'.")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                T, value = float(row[0]), float(row[1])
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}: linha {line} inválida: {row}") from exc
            if not math.isfinite(value):
                raise ConfigError(f"{path}: linha {line} com valor não finito.")
            samples.setdefault(T, []).append(value)
    if not samples:
        raise ConfigError(f"{path}: nenhuma amostra encontrada.")
    return {T: np.asarray(v, dtype=float) for T, v in samples.items()}


def write_path_dump(path, batch, limit):
    if batch.price_paths is None:
        raise ConfigError("O lote não guardou trajetórias completas.")
    times = batch.schedule.times
    count = min(int(limit), batch.m)
    rows = []
    for p in range(count):
        for step, t in enumerate(times):
            rows.append([p, step, t, batch.price_paths[p, step], batch.variance_paths[p, step]])
    return write_csv(path, PATH_HEADER, rows)


def write_manifest(folder, command, cfg, files):
    manifest = {
        "command": command,
        "config_sha256": config_hash(cfg),
        "seed": cfg["run"]["seed"],
        "versions": {
            "roughvol": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "files": sorted(os.path.basename(f) for f in files),
    }
    path = os.path.join(folder, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return normalize_path(path)


def write_report(folder, title, resumo, files, extra_sections=None):
    md_lines = [f"# {title}", "", "## Resumo"]
    for key, value in resumo.items():
        md_lines.append(f"- {key}: **{_fmt(value)}**")
    for section, lines in (extra_sections or {}).items():
        md_lines += ["", f"## {section}"] + list(lines)
    md_lines += ["", "## Arquivos"]
    md_lines += [f"- `{os.path.basename(f)}`" for f in files]
    path = os.path.join(folder, "relatorio.md")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(md_lines) + "\n")
    return normalize_path(path)
