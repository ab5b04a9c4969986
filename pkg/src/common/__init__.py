"""Shared configuration, logging, errors and run state"""
