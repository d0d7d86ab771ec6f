# -------------------------------------------------------------------------
# Copyright (c) 2026 BrunoHPS7
# Todos os direitos reservados.
# Este código é distribuído sob a Licença MIT.
# A cópia integral ou parcial deve incluir este aviso de direitos autorais.
# -------------------------------------------------------------------------

import os
import platform
import sys

from services import load_config, run_module
from src.errors import exit_code_for


def is_dev_mode():
    return os.getenv("DEV_MODE", "false").lower() == "true"


def executar_pipeline_dev():
    config = load_config()
    mode = config["execution_mode"]
    print(f"Sistema: {platform.system()} | Modo: {mode}")

    try:
        run_module(config, mode)
    except KeyboardInterrupt:
        print("\nSaindo...")
        sys.exit(0)
    except Exception as exc:
        code = exit_code_for(exc)
        if code == 1:
            raise
        print(f"Erro: {exc}", file=sys.stderr)
        sys.exit(code)


# Pipeline Principal:
if __name__ == "__main__":
    if is_dev_mode():
        print("🔧 DEV_MODE ativo: execução via terminal")
        executar_pipeline_dev()

    else:
        from app import app
        print("🌐 Modo servidor: iniciando API HTTP na porta 5000")
        app.run(port=5000)
