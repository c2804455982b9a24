"""Median KL versus coreset size on RBF regression synthetic data."""

from _common import run

if __name__ == "__main__":
    run("rbf", __doc__)
