"""Energy-conserving random unitaries: machine-to-Hamiltonian compiler, chain spectra,
random-unitary samplers, the phase-estimation channel and oracle verification."""

__version__ = "0.1.0"
