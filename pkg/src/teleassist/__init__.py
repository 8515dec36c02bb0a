"""Shared-control teleoperation planner and simulator for a dual-arm mobile manipulator."""

__version__ = "0.1.0"
