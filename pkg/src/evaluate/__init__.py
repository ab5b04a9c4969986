"""Answer scoring, summaries and reports"""
