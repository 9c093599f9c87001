"""Parent-to-child generalized belief propagation and its stochastic variant."""
