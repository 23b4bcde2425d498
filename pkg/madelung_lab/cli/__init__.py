"""Command line interface of madelung_lab."""
