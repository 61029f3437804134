"""Federated machine-unlearning benchmark for tabular binary classification."""
