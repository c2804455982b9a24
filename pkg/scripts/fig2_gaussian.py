"""Median KL versus coreset size on Gaussian-mean synthetic data."""

from _common import run

if __name__ == "__main__":
    run("gaussian", __doc__)
