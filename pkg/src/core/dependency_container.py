# src/core/dependency_container.py
import logging
from typing import Any, Callable, Dict, Type, TypeVar, cast

logger = logging.getLogger(__name__)

T = TypeVar('T')


class DependencyContainer:
    """Name-keyed registry of the services one command run needs."""

    def __init__(self):
        self._services: Dict[str, Any] = {}
        self._factories: Dict[str, Callable[["DependencyContainer"], Any]] = {}

    def register(self, name: str, instance: Any) -> None:
        self._services[name] = instance
        logger.debug(f"Registered service: {name}")

    def register_factory(self, name: str, factory: Callable[["DependencyContainer"], Any]) -> None:
        """Factory is called with the container on first lookup; the result is cached."""
        self._services.pop(name, None)
        self._factories[name] = factory
        logger.debug(f"Registered factory: {name}")

    def get(self, name: str) -> Any:
        if name in self._services:
            return self._services[name]
        if name in self._factories:
            instance = self._factories[name](self)
            self._services[name] = instance
            return instance
        raise KeyError(f"Service not found: {name}")

    def get_typed(self, name: str, expected_type: Type[T]) -> T:
        service = self.get(name)
        if not isinstance(service, expected_type):
            raise TypeError(f"Service {name} is not of type {expected_type.__name__}")
        return cast(expected_type, service)

    def has(self, name: str) -> bool:
        return name in self._services or name in self._factories
