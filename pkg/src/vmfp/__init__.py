"""Phase-space simulator and verification harness for the 1.5D Vlasov-Maxwell-Fokker-Planck system."""

__version__ = "0.1.0"
