"""Check registry for discovery and management."""

from __future__ import annotations

from typing import TYPE_CHECKING

from config.logging import get_logger

if TYPE_CHECKING:
    from verify.base import BaseCheck

logger = get_logger("verify")


class CheckRegistry:
    """Registry of verification checks, keyed by name."""

    _instance: CheckRegistry | None = None

    def __init__(self):
        self._checks: dict[str, BaseCheck] = {}
        self._initialized = False

    @classmethod
    def get_instance(cls) -> CheckRegistry:
        """Get or create the singleton registry instance."""
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance

    def register(self, check: BaseCheck) -> None:
        self._checks[check.name] = check

    def unregister(self, name: str) -> None:
        self._checks.pop(name, None)

    def get(self, name: str) -> BaseCheck | None:
        return self._checks.get(name)

    def get_all(self) -> list[BaseCheck]:
        """All checks, ordered by name."""
        return [self._checks[name] for name in self.get_names()]

    def get_names(self) -> list[str]:
        return sorted(self._checks)

    def initialize(self) -> None:
        """Register the bundled checks. Safe to call more than once."""
        if self._initialized:
            return

        from verify.equations import EQUATION_CHECKS
        from verify.structural import STRUCTURAL_CHECKS
        from verify.submanifolds import SUBMANIFOLD_CHECKS

        for check_cls in (*STRUCTURAL_CHECKS, *EQUATION_CHECKS, *SUBMANIFOLD_CHECKS):
            self.register(check_cls())

        self._initialized = True
        logger.debug(f"Registered checks: {', '.join(self.get_names())}")


def get_registry() -> CheckRegistry:
    """Get the initialized check registry singleton."""
    registry = CheckRegistry.get_instance()
    registry.initialize()
    return registry
