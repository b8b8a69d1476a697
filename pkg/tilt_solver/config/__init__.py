"""Option dataclasses, validated run configuration and logging setup."""
