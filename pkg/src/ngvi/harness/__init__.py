"""Configuration, seeded multi-run execution, aggregation and the command line."""
