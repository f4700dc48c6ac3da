"""Wireless reliability versus computing power in proof-of-work security.

Submodules:

- ``ledger``: toy proof-of-work chain (Merkle root, nonce search, verification)
- ``channel``: block delivery probability over a QPSK/Rayleigh link with ARQ
- ``race``: attacker/honest mining race, closed forms and Monte-Carlo
- ``experiments``: dataset generators for the tradeoff, gap, CDF and depth sweeps
- ``cli``: command-line entry point
"""

__version__ = "0.1.0"
