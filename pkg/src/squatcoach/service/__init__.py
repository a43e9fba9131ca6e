"""Persistence formats, storage, live streaming service, and the CLI."""
