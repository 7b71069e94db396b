"""Configuration modules shared by the library, the verifier and the CLI.

Submodules:
- config.logging: Logging setup with a tag-colored console handler

Numerical settings live in fieldtriple_core.config:
    from config.logging import init_logging, get_logger
    from fieldtriple_core.config import get_config
"""
