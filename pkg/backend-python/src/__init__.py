"""
Pacote: src
Função:
    - Define o diretório 'src' como um módulo Python importável.
    - Permite importações como: from src.soe_kernel import generate_soe
"""

__version__ = "1.0.0"
