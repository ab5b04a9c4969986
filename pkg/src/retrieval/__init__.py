"""Chunking and the vector store"""
