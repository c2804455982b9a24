"""Median Laplace-normalized KL on logistic synthetic data."""

from _common import run

if __name__ == "__main__":
    run("logistic", __doc__)
