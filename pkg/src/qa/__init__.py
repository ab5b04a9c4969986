"""Question answering routes and the benchmark runner"""
