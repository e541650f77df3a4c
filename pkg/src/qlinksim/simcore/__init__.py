"""Event loop, configuration, experiment driver, output files and CLI."""
