# __init__.py
# ---------------------------------------------------------------
# Define o diretório utils como pacote Python importável.
# Permite importar funções de cada módulo assim:
#   from utils.config_utils import build_config
#   from utils.io_utils import write_csv
# ---------------------------------------------------------------
