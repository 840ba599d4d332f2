"""Test package for optolattice."""
