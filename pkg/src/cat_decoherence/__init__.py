"""Decoherence of three coupled Schrodinger-cat oscillators."""

__version__ = "0.1.0"


def main(argv=None) -> int:
    """Main entry point for the application."""
    from .main import main as _main

    return _main(argv)


__all__ = ["__version__", "main"]
