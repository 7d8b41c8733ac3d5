# Stackelberg bandwidth-pricing solver package
__version__ = "0.1.0"
