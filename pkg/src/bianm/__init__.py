__version__ = "0.1.0"
__author__ = "bianm developers"
__description__ = "Gridless 1-bit mmWave MIMO-OFDM channel estimation by atomic norm minimization"
