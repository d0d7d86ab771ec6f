# log_utils.py
# ---------------------------------------------------------------
# Configuração do logging das execuções.
# Cada comando grava <pasta>/<nome>.log e repete as mensagens no stderr,
# deixando o stdout livre para a linha JSON do task_runner.
# ---------------------------------------------------------------

import logging
import os
import sys


def configurar_logging(pasta, nome="execucao"):
    os.makedirs(pasta, exist_ok=True)
    log_file = os.path.join(pasta, f"{nome}.log")
    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)
        handler.close()
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler(sys.stderr),
        ]
    )
    return log_file
