"""Three-flavour collective neutrino oscillations on qutrit and qubit registers."""
__version__ = "0.1.0"
