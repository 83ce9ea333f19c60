"""Program graphs and graph-convolutional classification for ELF binaries."""

__version__ = "0.1.0"
