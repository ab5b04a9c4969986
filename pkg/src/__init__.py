"""GDELT Knowledge-Graph QA Pipeline - Core Package"""
__version__ = "0.1.0"
