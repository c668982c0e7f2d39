from .app import ServiceSettings, create_app, export_feedback

__all__ = ["ServiceSettings", "create_app", "export_feedback"]
