"""
Configuration settings for the Chaotic Walk Lab.
"""
import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Base configuration."""

    # Flask
    SECRET_KEY = os.getenv('SECRET_KEY', 'dev-secret-key-change-in-production')
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

    # Database (run ledger)
    SQLALCHEMY_DATABASE_URI = os.getenv('DATABASE_URL', 'sqlite:///chaoswalk.db')
    SQLALCHEMY_TRACK_MODIFICATIONS = False

    # Redis (empty URL disables the solver cache)
    REDIS_URL = os.getenv('REDIS_URL', '')
    CACHE_TTL_SECONDS = int(os.getenv('CACHE_TTL_SECONDS', '3600'))

    # Arithmetic
    ARITHMETIC_MODE = os.getenv('ARITHMETIC_MODE', 'rational')
    RATIONAL_MAX_SYMBOLS = int(os.getenv('RATIONAL_MAX_SYMBOLS', '4096'))
    RATIONAL_SOLVE_MAX_SYMBOLS = int(os.getenv('RATIONAL_SOLVE_MAX_SYMBOLS', '256'))
    RATIONAL_ORACLE_MAX_STATES = int(os.getenv('RATIONAL_ORACLE_MAX_STATES', '400'))
    ORACLE_MAX_STATES = int(os.getenv('ORACLE_MAX_STATES', '100000'))
    SUBSHIFT_MAX_SYMBOLS = int(os.getenv('SUBSHIFT_MAX_SYMBOLS', str(2 ** 24)))
    DENSE_MAX_SYMBOLS = int(os.getenv('DENSE_MAX_SYMBOLS', '4096'))

    # Skew products
    DRIVING_WINDOW = int(os.getenv('DRIVING_WINDOW', '50'))
    QUADRATURE_NODES = int(os.getenv('QUADRATURE_NODES', str(2 ** 16)))
    VALIDATION_GRID = int(os.getenv('VALIDATION_GRID', '201'))

    # Monte Carlo
    TRAJECTORY_SAMPLES = int(os.getenv('TRAJECTORY_SAMPLES', '64'))
    TRAJECTORY_GROUP = int(os.getenv('TRAJECTORY_GROUP', '16'))
    TRIAL_CHUNK = int(os.getenv('TRIAL_CHUNK', '4096'))
    BLOCK_STEPS = int(os.getenv('BLOCK_STEPS', '1024'))
    BLOCK_CELLS = int(os.getenv('BLOCK_CELLS', str(2 ** 22)))
    MAX_THREADS = int(os.getenv('MAX_THREADS', '4'))

    # Stopping-time bounds
    TILT_MAX_ITER = int(os.getenv('TILT_MAX_ITER', '200'))
    TILT_TOLERANCE = float(os.getenv('TILT_TOLERANCE', '1e-10'))
    POISSON_TOLERANCE = float(os.getenv('POISSON_TOLERANCE', '1e-10'))
    CENTERING_TOLERANCE = float(os.getenv('CENTERING_TOLERANCE', '1e-12'))
    CENSORING_WARN_FRACTION = float(os.getenv('CENSORING_WARN_FRACTION', '0.5'))
    DIVERGENCE_RATIO_PER_DECADE = float(os.getenv('DIVERGENCE_RATIO_PER_DECADE', '2.0'))

    # Intermittency
    LAMINAR_EPSILON = float(os.getenv('LAMINAR_EPSILON', '0.01'))
    TREND_MARGIN = float(os.getenv('TREND_MARGIN', '0.0'))

    # Outputs
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'results')


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    TESTING = False


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False
    TESTING = False


class TestingConfig(Config):
    """Testing configuration."""
    DEBUG = True
    TESTING = True
    SQLALCHEMY_DATABASE_URI = 'sqlite:///:memory:'
    REDIS_URL = ''
    MAX_THREADS = 2


config_by_name = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
