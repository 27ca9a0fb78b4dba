#!/usr/bin/env python3
"""
Spectral Registration
Command-line entry point: python main.py <embed|register|rswd|map|transfer|replay> ...
"""
from src.cli import main

if __name__ == "__main__":
    main()
