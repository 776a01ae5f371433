"""
Experiment configurations of the predator-prey game.
"""
from django.db import models


class CommMode(models.TextChoices):
    """Which information the predators (and prey) get."""
    NO_COMM = 'no_comm', 'No Communication'
    FULL_OBS = 'full_obs', 'Full Observability'
    PRIVATE_COMM = 'private_comm', 'Private Communication'
    PUBLIC_COMM = 'public_comm', 'Public Communication'

    @property
    def communicates(self):
        """Predators exchange learned messages."""
        return self in (CommMode.PRIVATE_COMM, CommMode.PUBLIC_COMM)

    @property
    def prey_hear_messages(self):
        return self == CommMode.PUBLIC_COMM


class Team(models.TextChoices):
    PREDATORS = 'predators', 'Predators'
    PREY = 'prey', 'Prey'
