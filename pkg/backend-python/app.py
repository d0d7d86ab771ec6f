# backend-python/app.py
import json
import os
import signal
import subprocess
import sys

from flask import Flask, jsonify, request

from services import load_config
from src.errors import ConfigError
from utils.config_utils import DEFAULT_CONFIG, resolve_path

app = Flask(__name__)

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
TASK_SCRIPT = os.path.join(BASE_DIR, "bin", "task_runner.py")


def _data_out():
    """Mesma pasta que o task_runner usa com o config.yaml padrão."""
    try:
        out_dir = load_config()["paths"]["out_dir"]
    except ConfigError:
        out_dir = DEFAULT_CONFIG["paths"]["out_dir"]
    return resolve_path(out_dir)


DATA_OUT = _data_out()

ROUTES = {
    "gerar-nos": ("gen-nodes", "Nós SOE gerados com sucesso."),
    "smile": ("smile", "Smile de volatilidade calculado com sucesso."),
    "superficie": ("surface", "Superfície de volatilidade calculada com sucesso."),
    "calibrar": ("calibrate", "Calibração executada com sucesso."),
    "barreiras": ("barrier", "Preços de barreira calculados com sucesso."),
    "paisagem": ("landscape", "Paisagem da perda calculada com sucesso."),
}


def _parse_status(stdout: str):
    """Último objeto JSON impresso pelo task_runner (banners vêm antes)."""
    for line in reversed(stdout.strip().splitlines()):
        line = line.strip()
        if not line.startswith("{"):
            continue
        try:
            status = json.loads(line)
        except json.JSONDecodeError:
            return None
        return status if isinstance(status, dict) else None
    return None


def _run_task(script_path: str, *args: str):
    if not os.path.exists(script_path):
        raise FileNotFoundError("Script não encontrado.")

    proc = subprocess.run(
        [sys.executable, script_path, *args],
        capture_output=True,
        text=True
    )

    if proc.returncode != 0:
        msg = proc.stderr.strip().splitlines()[-1] if proc.stderr.strip() else "Falha na execução."
        return None, msg

    result = _parse_status(proc.stdout)
    if result is None:
        return None, "Saída inválida do processo."
    return result, None


def _task_args(command: str, payload: dict):
    args = [command, "--no-progress"]
    if payload.get("config"):
        args += ["--config", str(payload["config"])]
    if payload.get("seed") is not None:
        args += ["--seed", str(int(payload["seed"]))]
    if payload.get("threads") is not None:
        args += ["--threads", str(int(payload["threads"]))]
    for key, value in (payload.get("set") or {}).items():
        args += ["--set", f"{key}={json.dumps(value)}"]
    return args


def _executar(route: str):
    command, mensagem = ROUTES[route]
    try:
        payload = request.get_json(silent=True) or {}
        result, error = _run_task(TASK_SCRIPT, *_task_args(command, payload))
        if error:
            return jsonify({"status": "erro", "mensagem": error}), 400

        return jsonify({"status": "ok", "mensagem": mensagem, "resultado": result})

    except Exception as e:
        return jsonify({
            "status": "erro",
            "mensagem": str(e)
        }), 500


@app.route("/gerar-nos", methods=["POST"])
def gerar_nos():
    return _executar("gerar-nos")


@app.route("/smile", methods=["POST"])
def smile():
    return _executar("smile")


@app.route("/superficie", methods=["POST"])
def superficie():
    return _executar("superficie")


@app.route("/calibrar", methods=["POST"])
def calibrar():
    return _executar("calibrar")


@app.route("/barreiras", methods=["POST"])
def barreiras():
    return _executar("barreiras")


@app.route("/paisagem", methods=["POST"])
def paisagem():
    return _executar("paisagem")


def garantir_pasta(nome):
    caminho = os.path.join(DATA_OUT, nome)
    os.makedirs(caminho, exist_ok=True)
    return caminho


@app.route("/historico/<comando>", methods=["GET"])
def historico(comando):
    comandos = {cmd for cmd, _ in ROUTES.values()}
    if comando not in comandos:
        return jsonify({"status": "erro", "mensagem": f"Comando desconhecido: {comando}"}), 404
    pasta = garantir_pasta(comando)
    return jsonify({
        "status": "ok",
        "path": pasta,
        "arquivos": sorted(os.listdir(pasta)),
    })


@app.route('/shutdown', methods=['POST'])
def shutdown():
    print("Recebido comando de encerramento.")
    # Envia um sinal para o próprio sistema operacional matar este processo
    os.kill(os.getpid(), signal.SIGINT)
    return "Encerrando servidor...", 200


if __name__ == "__main__":
    app.run(port=5000, debug=True)
