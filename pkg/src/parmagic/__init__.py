"""Parallel Magic Square games with noisy shallow quantum provers.

Modules:
    games: game tables, exact classical and leakage-assisted values.
    quantum: state-vector simulation of the honest quantum strategy.
    circuit: layered geometrically-local circuits and the NAND to Toffoli rewrite.
    compiler: two-party protocols obtained from a horizontal cut of a circuit.
    protocol: verifier, honest prover, verdicts and soundness probes.
    parbell: parallel runs of other two-prover games through strategy plugins.
    cli: the ``parmagic`` command.
"""

from .errors import ConfigError, DomainError, ResourceError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DomainError", "ResourceError", "__version__"]
