from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Dict, Literal, Tuple


# Residual tolerances used by the verification suites, keyed by check name.
DEFAULT_TOLERANCES: Dict[str, float] = {
    "lax_residual": 1e-12,
    "newton": 1e-10,
    "henon_conjugacy": 1e-12,
    "pushforward_j2": 1e-12,
    "pushforward_j3": 1e-10,
    "pushforward_flow": 1e-12,
    "jacobi_analytic": 1e-10,
    "jacobi_fd": 1e-6,
    "jacobi_composite": 1e-5,
    "compatibility_analytic": 1e-10,
    "compatibility_fd": 1e-6,
    "lenard_u": 1e-10,
    "lenard_phase": 1e-8,
    "bihamiltonian": 1e-8,
    "master_y1": 1e-8,
    "conformal": 1e-10,
    "coefficient": 1e-4,
    "scalarity": 1e-4,
    "commute": 1e-5,
    "involution": 1e-8,
    "multi_hamiltonian": 1e-8,
    "tdsym_affine": 1e-8,
    "j3_discrepancy": 1e-10,
    "hierarchy_identity": 1e-12,
    "antisymmetry": 1e-10,
}


class Settings(BaseSettings):
    """Laboratory settings"""

    # Application
    app_title: str = Field(default="KM lattice verification lab", validation_alias="KMLAB_TITLE")
    app_version: str = Field(default="0.1.0", validation_alias="KMLAB_VERSION")
    log_level: str = Field(default="INFO", validation_alias="KMLAB_LOG_LEVEL")

    # Sampling
    default_seed: int = Field(default=42, validation_alias="KMLAB_SEED")
    default_points: int = Field(default=20, validation_alias="KMLAB_POINTS")
    u_box: Tuple[float, float] = (0.5, 1.5)
    phase_box: Tuple[float, float] = (-1.0, 1.0)

    # Eigensolver
    eigensolver: Literal["lapack", "jacobi"] = Field(default="lapack", validation_alias="KMLAB_EIGENSOLVER")
    jacobi_max_sweeps: int = 50
    jacobi_threshold: float = 1e-14

    # Jacobi identity sweeps
    jacobi_full_dim: int = 12
    jacobi_triple_limit: int = 2000
    jacobi_triple_seed: int = 0

    # Integration
    output_stride_time: float = 0.01

    tolerances: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    def tolerance(self, name: str) -> float:
        return self.tolerances[name]


settings = Settings()
