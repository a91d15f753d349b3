"""
Chaotic Walk Lab Flask Application Factory.
"""
import logging

from flask import Flask
from flask_sqlalchemy import SQLAlchemy
from flask_migrate import Migrate
import redis

from config.config import config_by_name

__version__ = '1.0.0'

# Initialize extensions
db = SQLAlchemy()
migrate = Migrate()
redis_client = None


def create_app(config_name='default'):
    """
    Application factory pattern.

    Args:
        config_name: Configuration name (development, production, testing)

    Returns:
        Flask application instance
    """
    app = Flask(__name__)

    # Load configuration
    app.config.from_object(config_by_name[config_name])
    app.logger.setLevel(getattr(logging, str(app.config['LOG_LEVEL']).upper(), logging.INFO))

    # Initialize extensions
    db.init_app(app)
    migrate.init_app(app, db)

    # Initialize Redis (optional)
    global redis_client
    if app.config['REDIS_URL']:
        redis_client = redis.from_url(
            app.config['REDIS_URL'],
            decode_responses=True
        )
    else:
        redis_client = None

    # Register command blueprints
    from app.commands import dynamics, poisson, stopping, intermittency
    app.register_blueprint(dynamics.bp)
    app.register_blueprint(poisson.bp)
    app.register_blueprint(stopping.bp)
    app.register_blueprint(intermittency.bp)

    # Create ledger tables
    from app.models import run  # noqa: F401
    with app.app_context():
        db.create_all()

    return app
