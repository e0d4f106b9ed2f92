"""GPU failure forecasting on synthetic drifting telemetry.

Pipeline: telemetry generation -> simulated collection -> windowed instance
datasets -> feature encoding -> baseline models and ensembles -> sliding
retraining experiments with ranking-metric evaluation.
"""

__version__ = "0.1.0"
