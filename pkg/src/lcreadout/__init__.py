"""Longitudinal-coupling qubit readout: models, simulation and fidelity analysis."""
