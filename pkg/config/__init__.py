"""Config YAMLs."""
