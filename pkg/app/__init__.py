"""Conformal-verify: numerical checks for conformally invariant elliptic operators."""
