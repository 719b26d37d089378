"""snakesmith: turn shell history and IPython notebooks into Snakemake workflows."""

__version__ = "0.1.0"
