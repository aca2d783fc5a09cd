from pydantic import BaseSettings


class Settings(BaseSettings):
    # Application Settings
    log_level: str = "INFO"
    project_name: str = "Devanagari CNN"
    version: str = "1.0.0"

    # Training defaults
    default_seed: int = 0
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    split_ratio: float = 0.8

    # Preprocessing
    background_threshold: int = 26

    # Evaluation / loading
    eval_batch_size: int = 256
    load_workers: int = 4
    predict_top_k: int = 3

    # Model file
    model_format_version: int = 1

    class Config:
        env_file = ".env"
        env_prefix = "DCNN_"
        case_sensitive = False


# Create settings instance
settings = Settings()
