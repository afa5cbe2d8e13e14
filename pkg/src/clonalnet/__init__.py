"""clonalnet: a compact convolutional network whose penultimate layer
expands scarce training features through clonal selection (affinity-
proportional cloning, inverse-affinity mutation, crossover), plus a
two-phase immune classifier and an experiment harness."""

__version__ = "0.1.0"
