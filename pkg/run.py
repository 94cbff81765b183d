from flask.cli import FlaskGroup

from app import create_app

app = create_app()


if __name__ == "__main__":
    # python run.py lab ...  ==  flask --app run.py lab ...
    FlaskGroup(create_app=lambda: app)()
