"""Hand-written neural networks: MLP and bidirectional LSTM."""
