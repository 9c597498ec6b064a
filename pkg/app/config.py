"""Toolkit configuration using pydantic-settings."""

from functools import lru_cache

from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide numerical defaults loaded from environment variables.

    Experiment configs may override any tolerance for a single run; the
    values here are what a run falls back to.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )

    # Runtime
    log_level: str = "INFO"
    output_dir: str = "out"
    threads: int = Field(default=1, ge=1, le=256)
    seed: int = 20190102

    # Eigenvalues (cyclic Jacobi)
    jacobi_tol: float = 1e-12

    # Cone closure band and verdicts
    boundary_tol: float = 1e-10
    verdict_tol_exact: float = 1e-8
    verdict_grid_factor: float = 10.0  # grid verdict tol = factor * h^2

    # Möbius maps
    pole_guard: float = 1e-9

    # Viscosity / envelopes
    contact_rel_tol: float = 1e-9
    stencil_tol: float = 1e-8
    c11_hessian_bound: float = 1e3
    c11_max_kink_fraction: float = 0.1

    # Comparison harness
    contact_tol: float = 1e-10
    alpha_doublings: int = 20
    mu_halvings: int = 10
    mu_fraction: float = 1e-3
    bisection_steps: int = 60
    deformation_samples: int = 2000
    deformation_radius: float = 0.5
    hopf_tol: float = 1e-8
    hopf_min_s: float = 1e-6

    # Moving spheres
    sphere_directions: int = 64
    sphere_radii: int = 48
    sphere_probe_count: int = 64
    sphere_compare_tol: float = 1e-10
    radius_rel_tol: float = 1e-5
    identity_rel_tol: float = 2e-2
    fit_tol: float = 1e-6
    certification_samples: int = 512

    @field_validator(
        "jacobi_tol",
        "boundary_tol",
        "verdict_tol_exact",
        "pole_guard",
        "contact_rel_tol",
        "contact_tol",
        "radius_rel_tol",
        "fit_tol",
        "hopf_tol",
        "hopf_min_s",
        "deformation_radius",
    )
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Tolerances must be strictly positive."""
        if v <= 0:
            raise ValueError("tolerances must be strictly positive")
        return v

    @model_validator(mode="after")
    def enforce_sampling_floor(self) -> "Settings":
        """Keep sampling counts large enough for the probe sweeps to mean anything.

        - The probe sweep of the critical radius needs at least 8 sub-radii.
        - Sphere comparisons need every axis direction, i.e. at least 6.
        """
        if self.sphere_probe_count < 8:
            raise ValueError("sphere_probe_count must be at least 8")
        if self.sphere_directions < 6:
            raise ValueError("sphere_directions must be at least 6")
        return self


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance.

    The ``@lru_cache`` decorator ensures a single ``Settings`` object is
    created for the lifetime of the process (env vars are read once at
    first call).  In tests, call ``get_settings.cache_clear()`` between
    runs to pick up overridden environment variables.
    """
    return Settings()
