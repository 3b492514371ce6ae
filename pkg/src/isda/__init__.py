"""Inner-state driven random access simulator and distributed CE learner."""
