# setup_venv.py
# ---------------------------------------------------------------
# Prepara o ambiente do motor rough Bergomi:
#   1. escolhe um Python suportado (3.9 a 3.11);
#   2. cria (ou reaproveita) a venv '.venv';
#   3. instala o requirements.txt;
#   4. confere se a pilha numérica importa dentro da venv.
# Uso: python3.11 setup_venv.py [--testes]
#   --testes roda a suíte rápida (pytest -m "not slow") ao final.
# ---------------------------------------------------------------

import argparse
import os
import platform
import shutil
import subprocess
import sys

ROOT = os.path.dirname(os.path.abspath(__file__))
VENV_PATH = os.path.join(ROOT, ".venv")
REQUIREMENTS = os.path.join(ROOT, "requirements.txt")
BACKEND = os.path.join(ROOT, "backend-python")
SUPPORTED = ((3, 9), (3, 11))
CANDIDATES = ("python3.11", "python3.10", "python3.9", "python3")
# módulos que precisam importar na venv (nome de import, não do pacote)
STACK = ("numpy", "scipy", "tqdm", "yaml", "flask", "pytest")


def venv_bin(name):
    if platform.system() == "Windows":
        return os.path.join(VENV_PATH, "Scripts", f"{name}.exe")
    return os.path.join(VENV_PATH, "bin", name)


def python_version(executable):
    probe = "import sys; print(*sys.version_info[:3])"
    try:
        out = subprocess.check_output([executable, "-c", probe], text=True)
        return tuple(int(p) for p in out.split())
    except (OSError, subprocess.CalledProcessError, ValueError):
        return None


def supported(version):
    return bool(version) and SUPPORTED[0] <= version[:2] <= SUPPORTED[1]


def fmt(version):
    return ".".join(map(str, version or (0, 0, 0)))


def pick_interpreter():
    seen = [sys.executable] if sys.executable else []
    seen += [p for p in map(shutil.which, CANDIDATES) if p and p not in seen]
    for exe in seen:
        version = python_version(exe)
        if supported(version):
            return exe, version
    return None, None


def ensure_venv():
    if os.path.exists(VENV_PATH):
        version = python_version(venv_bin("python"))
        if not supported(version):
            print(f"[ERROR] A venv atual usa Python {fmt(version)}; recrie com 3.9 a 3.11.")
            print("[ERROR] Exemplo: rm -rf .venv && python3.11 setup_venv.py")
            sys.exit(1)
        print(f"[INFO] Reaproveitando '.venv' (Python {fmt(version)}).")
        return

    exe, version = pick_interpreter()
    if exe is None:
        print("[ERROR] Python 3.9 a 3.11 são necessários para este projeto.")
        sys.exit(1)
    print(f"[INFO] Criando '.venv' com {exe} (Python {fmt(version)})...")
    subprocess.check_call([exe, "-m", "venv", VENV_PATH])


def install_requirements():
    if not os.path.exists(REQUIREMENTS):
        print("[WARNING] requirements.txt não encontrado; nada a instalar.")
        return
    print("[INFO] Instalando numpy, scipy, tqdm, PyYAML, Flask e pytest...")
    subprocess.check_call([venv_bin("pip"), "install", "--upgrade", "-r", REQUIREMENTS])


def check_stack():
    script = "import importlib\n" + "".join(f"importlib.import_module('{m}')\n" for m in STACK)
    result = subprocess.run([venv_bin("python"), "-c", script], capture_output=True, text=True)
    if result.returncode != 0:
        print("[ERROR] A pilha numérica não importa na venv:")
        print(result.stderr.strip().splitlines()[-1])
        sys.exit(1)
    print(f"[INFO] Pilha conferida: {', '.join(STACK)}.")


def run_fast_tests():
    print('[INFO] Rodando pytest -m "not slow" em backend-python/...')
    code = subprocess.call([venv_bin("python"), "-m", "pytest", "-m", "not slow", "-q"], cwd=BACKEND)
    if code != 0:
        sys.exit(code)


def main(argv=None):
    parser = argparse.ArgumentParser(description="Prepara a venv do backend.")
    parser.add_argument("--testes", action="store_true", help="Roda a suíte rápida ao final.")
    args = parser.parse_args(argv)

    ensure_venv()
    install_requirements()
    check_stack()
    if args.testes:
        run_fast_tests()
    print("[INFO] Setup concluído. Ative com: source .venv/bin/activate")


if __name__ == "__main__":
    main()
