"""Non-Markovian dynamics of a control qubit coupled to a damped target qubit."""

__version__ = "0.1.0"
