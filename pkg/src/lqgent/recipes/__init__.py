"""Bundled TOML run recipes for the reference phase diagrams."""
