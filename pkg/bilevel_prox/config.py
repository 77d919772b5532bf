from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # =============================
    # Convex core tolerances
    # =============================
    psd_tol: float = Field(default=1e-10, description="Smallest eigenvalue accepted for PSD matrices is -psd_tol")
    symmetry_tol: float = Field(default=1e-10, description="Max |Q - Q^T| entry for a Quadratic")
    conjugate_tol: float = Field(default=1e-9, description="Feasibility slack when testing v against dom f*")
    membership_tol: float = Field(default=1e-9, description="Point-in-set slack and witness membership slack")
    growth_samples: int = Field(default=64, description="Points or directions sampled when checking bounded-below and coercivity declarations")
    dykstra_tol: float = Field(default=1e-10, description="Dykstra sweep residual for Intersection projections")
    dykstra_max_sweeps: int = Field(default=100_000, description="Dykstra sweep cap")

    # =============================
    # Inner solver
    # =============================
    certificate_slack: float = Field(default=1e-9, description="Absolute slack used when re-checking certificates")
    inner_max_iter: int = Field(default=1_000_000, description="Iteration cap for one proximal subproblem")
    primal_tol: float = Field(default=1e-14, description="Relative step size below which the primal loop is settled")
    descent_tol: float = Field(default=1e-12, description="Relative round-off allowed when comparing prox objective values")
    composite_max_iter: int = Field(default=2_000, description="Iteration cap for oracle-based composite solves")
    max_skew_condition: float = Field(default=10.0, description="Largest lambda * ||skew(M)|| accepted by the splitting step")
    splitting_max_iter: int = Field(default=10_000, description="Forward-backward iteration cap for one operator step")
    witness_eta: float = Field(default=1e-12, description="Prox budget used to re-solve a step on which the stopping test fires")

    # =============================
    # Schedule defaults
    # =============================
    eps_0: float = Field(default=1.0, description="eps_k = eps_0 / (k+1)^p")
    eps_power: float = Field(default=1.0, description="p in (0, 1]")
    lambda_default: float = Field(default=1.0, description="Constant prox parameter")
    eta_0: float = Field(default=0.1, description="eta_k = eta_0 / (k+1)^q")
    eta_power: float = Field(default=2.0, description="q > 1")
    max_iter: int = Field(default=5_000, description="Outer iterations per run")

    # =============================
    # Gap function / stopping
    # =============================
    gap_tol: float = Field(default=1e-6, description="Frank-Wolfe duality gap target for g_D")
    gap_max_iter: int = Field(default=100_000, description="Ascent iteration cap for g_D")
    gap_check_samples: int = Field(default=8, description="Sample points used to check a Danskin subgradient")
    monotone_plus_tol: float = Field(default=1e-9, description="||M d|| allowed on the null space of sym(M)")

    # =============================
    # Oracle
    # =============================
    grid_guard: int = Field(default=10_000_000, description="Max grid points an oracle may enumerate")

    # =============================
    # Pydantic Config
    # =============================
    model_config = SettingsConfigDict(
        env_file=None,
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings,
        env_settings,
        dotenv_settings,
        file_secret_settings,
    ):
        # Only constructor kwargs and an explicit settings file; never os.environ.
        return (init_settings, dotenv_settings)

    # =============================
    # Utility Functions
    # =============================
    def schedule_defaults(self) -> dict:
        """Keyword arguments for a default Schedule"""
        return {
            "eps_0": self.eps_0,
            "p": self.eps_power,
            "lambda_lo": self.lambda_default,
            "lambda_hi": self.lambda_default,
            "eta_0": self.eta_0,
            "q": self.eta_power,
        }


# =============================
# Global settings instance
# =============================
settings = Settings()


def load_settings(path: str) -> Settings:
    """Build settings from a dotenv-style file"""
    return Settings(_env_file=path)


def apply_settings(overrides: Settings) -> None:
    """Copy values from another Settings instance into the global one"""
    for name in Settings.model_fields:
        setattr(settings, name, getattr(overrides, name))
