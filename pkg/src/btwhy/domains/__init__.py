"""Evaluation domains: the worked example, random domains and the serial-recall demo."""
