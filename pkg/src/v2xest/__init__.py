"""IEEE 802.11p vehicular channel estimation: link simulator, classical and
neural estimators, and the mixed-SNR vs high-SNR training experiment."""
__version__ = "0.1.0"
