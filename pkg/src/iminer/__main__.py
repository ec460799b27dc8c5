"""Allow ``python -m iminer``."""

from .cli import main

main()
