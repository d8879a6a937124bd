"""
Readers and writers of the package file formats.
"""
