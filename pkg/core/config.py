import os
import dotenv

dotenv.load_dotenv()


class Settings:
    """Process-wide settings read from the environment (.env is honoured)."""

    def __init__(self):
        self.database_url = os.getenv("NODAL_DATABASE_URL", "sqlite:///./nodal_lab.db")
        self.log_level = os.getenv("NODAL_LOG_LEVEL", "INFO").upper()
        self.workers = int(os.getenv("NODAL_WORKERS", "1"))
        self.output_dir = os.getenv("NODAL_OUTPUT_DIR", "./runs")
        self.sql_echo = os.getenv("NODAL_SQL_ECHO", "false").lower() in ("1", "true", "yes")


settings = Settings()
