"""GDELT table parsing, dump download and article text fetching"""
