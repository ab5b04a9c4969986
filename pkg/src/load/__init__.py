"""On-disk stores for the case-study subset and the article corpus"""
