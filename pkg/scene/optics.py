"""
Interface optics at the glass/air boundary: mirror reflection, Snell refraction
and unpolarized Fresnel reflectance.

Transmittance follows the intensity convention T_re = 1 - R; no radiance
solid-angle factor (n2/n1)^2 is applied.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from scene.geometry_core import EPS_UNIT, Vec3, as_vec3, is_unit
from utils.errors import OpticsError

AIR_IOR = 1.0


@dataclass(frozen=True)
class InterfaceEvent:
    """
    One reflection/refraction split at a box face.

    Attributes:
        incident: Unit direction of the arriving ray
        normal: Unit face normal on the incident side
        n1: Refractive index of the medium the ray comes from
        n2: Refractive index of the medium on the other side
        reflected: Mirror direction
        refracted: Snell direction, None under total internal reflection
        reflectance: Fresnel R
        transmittance: 1 - R
    """
    incident: Vec3
    normal: Vec3
    n1: float
    n2: float
    reflected: Vec3
    refracted: Optional[Vec3]
    reflectance: float
    transmittance: float

    @property
    def total_internal_reflection(self) -> bool:
        return self.refracted is None


def _check_unit(name: str, v: Vec3) -> Vec3:
    v = as_vec3(v)
    if not is_unit(v):
        raise OpticsError(f"{name} must be unit-norm, got norm {np.linalg.norm(v):.12f}")
    return v


def reflect(incident: Vec3, normal: Vec3) -> Vec3:
    """
    Law of reflection.

    Args:
        incident: Unit incident direction
        normal: Unit normal facing the incident side

    Returns:
        incident - 2 (incident . normal) normal
    """
    i = _check_unit("incident", incident)
    n = _check_unit("normal", normal)
    r = i - 2.0 * float(np.dot(i, n)) * n
    return r / np.linalg.norm(r)


def refract(incident: Vec3, normal: Vec3, n1: float, n2: float) -> Optional[Vec3]:
    """
    Snell's law, sin(theta_t) = (n1 / n2) sin(theta_i).

    Args:
        incident: Unit incident direction
        normal: Unit normal facing the incident side
        n1: Index of the incident medium
        n2: Index of the transmitting medium

    Returns:
        Unit refracted direction, or None under total internal reflection
    """
    i = _check_unit("incident", incident)
    n = _check_unit("normal", normal)
    if n1 <= 0.0 or n2 <= 0.0:
        raise OpticsError(f"Refractive indices must be positive, got n1={n1}, n2={n2}")

    eta = n1 / n2
    cos_i = -float(np.dot(i, n))
    sin2_t = eta * eta * max(0.0, 1.0 - cos_i * cos_i)
    if sin2_t > 1.0:
        return None
    cos_t = math.sqrt(1.0 - sin2_t)
    t = eta * i + (eta * cos_i - cos_t) * n
    return t / np.linalg.norm(t)


def fresnel_unpolarized(cos_i: float, n1: float, n2: float) -> float:
    """
    Natural-light Fresnel reflectance R = (R_s + R_p) / 2.

    Args:
        cos_i: Cosine of the incidence angle, in (0, 1]
        n1: Index of the incident medium
        n2: Index of the transmitting medium

    Returns:
        Reflectance in [0, 1]; exactly 1 under total internal reflection
    """
    if not 0.0 < cos_i <= 1.0 + EPS_UNIT:
        raise OpticsError(f"cos_i must lie in (0, 1], got {cos_i}")
    cos_i = min(cos_i, 1.0)

    sin2_t = (n1 / n2) ** 2 * (1.0 - cos_i * cos_i)
    if sin2_t >= 1.0:
        return 1.0
    cos_t = math.sqrt(1.0 - sin2_t)

    r_s = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t)
    r_p = (n1 * cos_t - n2 * cos_i) / (n1 * cos_t + n2 * cos_i)
    reflectance = 0.5 * (r_s * r_s + r_p * r_p)
    return min(1.0, max(0.0, reflectance))


def interface_event(incident: Vec3, normal: Vec3, n_outside: float, n_inside: float,
                    entering: bool) -> InterfaceEvent:
    """
    Split a ray at a box face into reflected and refracted parts.

    Args:
        incident: Unit incident direction
        normal: Unit face normal on the incident side
        n_outside: Index outside the box (air)
        n_inside: Index of the box material
        entering: True when the ray crosses from outside into the box

    Returns:
        The bundled event, with R + T_re = 1
    """
    n1, n2 = (n_outside, n_inside) if entering else (n_inside, n_outside)
    i = _check_unit("incident", incident)
    n = _check_unit("normal", normal)

    reflected = reflect(i, n)
    refracted = refract(i, n, n1, n2)
    if refracted is None:
        reflectance = 1.0
    else:
        # clamp keeps grazing hits (cos_i ~ 0) inside the fresnel domain
        cos_i = max(-float(np.dot(i, n)), 1e-12)
        reflectance = fresnel_unpolarized(cos_i, n1, n2)

    return InterfaceEvent(
        incident=i,
        normal=n,
        n1=n1,
        n2=n2,
        reflected=reflected,
        refracted=refracted,
        reflectance=reflectance,
        transmittance=1.0 - reflectance,
    )


def passthrough_event(incident: Vec3, normal: Vec3, n1: float, n2: float,
                      refracted: Optional[Vec3] = None) -> InterfaceEvent:
    """
    An event that sends all energy along one direction and none back.

    Used when the box is only a bounding volume (no bend) and by the
    single-refraction ablation (Snell bend, no Fresnel split).
    """
    i = _check_unit("incident", incident)
    direction = i if refracted is None else _check_unit("refracted", refracted)
    return InterfaceEvent(
        incident=i,
        normal=as_vec3(normal),
        n1=n1,
        n2=n2,
        reflected=reflect(i, _check_unit("normal", normal)),
        refracted=direction,
        reflectance=0.0,
        transmittance=1.0,
    )
