"""
Dataset presets: flat key=value experiment files for the three benchmark scenes
"""
