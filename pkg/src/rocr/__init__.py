"""Receipt OCR: receipt-area extraction, CTPN-style line detection, attention
encoder-decoder recognition with handwriting rejection, and evaluation."""

__version__ = "0.1.0"
