"""Desk-scale visual navigation testbed: ViT+compression+LSTM agents, reward analysis, PPO/BC/MAE."""
__version__ = "0.1.0"
