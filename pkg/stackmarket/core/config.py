from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Application settings
    STACKMARKET_LOG: str = "INFO"
    STACKMARKET_OUTPUT_DIR: str = "out"
    STACKMARKET_JOBS: int = 1

    # Solver limits
    MILP_NODE_LIMIT: int = 1_000_000
    LP_ITERATION_LIMIT: int = 50_000
    PRICE_FLOOR: float = 1e-3

    # Oracle limits
    ORACLE_MAX_EVALUATIONS: int = 100_000_000

    @property
    def log_level(self) -> str:
        return self.STACKMARKET_LOG.upper()

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")


settings = Settings()
