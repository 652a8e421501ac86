"""S-RAF style robustness benchmark harness for driving agents."""

__version__ = "0.1.0"
