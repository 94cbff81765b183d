import logging
import os

from dotenv import load_dotenv
from flask import Flask

from .extensions import db, migrate


__version__ = "0.1.0"


def create_app(config: dict | None = None) -> Flask:
    load_dotenv()
    app = Flask(__name__, instance_relative_config=True)
    os.makedirs(app.instance_path, exist_ok=True)

    db_url = os.environ.get("DATABASE_URL") or "sqlite:///" + os.path.join(app.instance_path, "rdlab.sqlite3")
    app.config["SQLALCHEMY_DATABASE_URI"] = db_url
    app.config["SQLALCHEMY_TRACK_MODIFICATIONS"] = False
    app.config["LAB_OUT_DIR"] = os.environ.get("LAB_OUT_DIR", "out")
    app.config["LAB_JOBS"] = os.environ.get("LAB_JOBS")
    app.config["LAB_SAVE_DATASETS"] = os.environ.get("LAB_SAVE_DATASETS")
    if config:
        app.config.update(config)

    level = os.environ.get("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger("app").setLevel(level)
    app.logger.setLevel(level)

    db.init_app(app)
    migrate.init_app(app, db)

    from . import models  # noqa: F401
    from .commands import register_commands

    register_commands(app)
    return app
