"""Ring arithmetic, the leveled scheme and the backend contract"""
