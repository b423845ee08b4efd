"""Iterated integrals over membranes: exact, quadrature and Monte-Carlo engines."""
