from .lark_cli import main
