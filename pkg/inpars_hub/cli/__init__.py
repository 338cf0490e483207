"""Командный интерфейс InPars Hub."""
