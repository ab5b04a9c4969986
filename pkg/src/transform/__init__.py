"""Case-study subset selection"""
