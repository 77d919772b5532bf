"""Inexact proximal-penalization methods for simple bilevel programs and simple MPECs."""

__version__ = "0.1.0"
