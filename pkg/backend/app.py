# backend/app.py

import logging

from flask import Flask
from flask_cors import CORS

import config
from routes.bounds import bounds_bp
from routes.permanent import permanent_bp


def create_app():
    app = Flask(__name__)
    CORS(app)
    app.logger.setLevel(config.LOG_LEVEL)

    # Register modular routes (blueprints)
    app.register_blueprint(permanent_bp, url_prefix="/api")
    app.register_blueprint(bounds_bp, url_prefix="/api")
    return app


app = create_app()

if __name__ == "__main__":
    logging.basicConfig(level=config.LOG_LEVEL)
    app.run(debug=True, port=5000)
