import argparse
import json
import os
import sys

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from services import MODULES, load_config, run_module
from src.errors import exit_code_for


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Executa os comandos do motor rough Bergomi.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in MODULES:
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="Arquivo YAML (padrão: config.yaml do backend).")
        p.add_argument("--seed", type=int, default=None, help="Semente mestre (run.seed).")
        p.add_argument("--threads", type=int, default=None, help="Threads (não altera resultados).")
        p.add_argument("--out-dir", default=None, help="Pasta de saída (paths.out_dir).")
        p.add_argument("--set", action="append", default=[], metavar="CHAVE=VALOR",
                       help="Sobrescreve uma chave pontilhada, ex.: simulation.m=65536")
        p.add_argument("--no-progress", action="store_true", help="Desativa as barras de progresso.")
    return parser


def _overrides(args) -> list:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"run.threads={args.threads}")
    if args.out_dir is not None:
        # --out-dir segue o cwd de quem chama; o config.yaml segue a raiz do backend
        overrides.append(f"paths.out_dir={json.dumps(os.path.abspath(args.out_dir))}")
    if args.no_progress:
        overrides.append("run.progress=false")
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        result = run_module(cfg, args.command)
    except Exception as exc:
        code = exit_code_for(exc)
        if code == 1:
            raise
        print(f"Erro: {exc}", file=sys.stderr)
        return code

    print(json.dumps({"status": "ok", "task": args.command, **result}, ensure_ascii=False))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
