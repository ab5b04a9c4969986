"""Chat and embedding model clients"""
