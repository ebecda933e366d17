"""Training harness: config, replay, checkpoints, train/evaluate loops, probes and the CLI."""
