from mlas2.cli import entrypoint

entrypoint()
