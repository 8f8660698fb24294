"""
Primitive factory for analytic SDF objects.
Builds ground-truth objects from their config / manifest dictionaries.
"""
from typing import Any, Dict, Optional, Type

from field.analytic_sdf import AnalyticSdf, Plane, RoundedBox, Sphere, Torus
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)


class SdfFactory:
    """Factory class for analytic SDF primitives."""

    # Registry of available primitives
    _primitive_types: Dict[str, Type[AnalyticSdf]] = {
        'sphere': Sphere,
        'rounded_box': RoundedBox,
        'torus': Torus,
        'plane': Plane,
    }

    @classmethod
    def create(cls, primitive_type: str, **params) -> AnalyticSdf:
        """
        Create a primitive of the specified type.

        Args:
            primitive_type: Primitive tag ('sphere', 'rounded_box', 'torus', 'plane')
            **params: Constructor parameters, including optional center and albedo

        Returns:
            The primitive

        Raises:
            ConfigError: If the type is unknown or the parameters do not fit it
        """
        if primitive_type not in cls._primitive_types:
            available_types = list(cls._primitive_types.keys())
            raise ConfigError(f"Unsupported primitive type: {primitive_type}. Available types: {available_types}")

        primitive_class = cls._primitive_types[primitive_type]
        try:
            primitive = primitive_class(**params)
        except TypeError as e:
            logger.error(f"Bad parameters for {primitive_type}: {e}")
            raise ConfigError(f"Bad parameters for {primitive_type}: {e}") from e
        logger.debug(f"Created {primitive_type} primitive with {params}")
        return primitive

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> Optional[AnalyticSdf]:
        """Inverse of AnalyticSdf.to_dict; None stands for an empty box."""
        if data is None:
            return None
        params = dict(data)
        primitive_type = params.pop("type", None)
        if primitive_type is None:
            raise ConfigError(f"Object description has no 'type': {data}")
        return cls.create(primitive_type, **params)

    @classmethod
    def get_available_types(cls) -> list:
        """Get list of available primitive tags."""
        return list(cls._primitive_types.keys())
