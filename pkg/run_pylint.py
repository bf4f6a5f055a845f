"""Runs pylint over the plugin sources and prints its report.

pylint exits nonzero for any message, so the report is printed either way.
"""
import subprocess

cmd = "pylint src/brst_plugins"
try:
    completed = subprocess.run(
        cmd, shell=True, check=True, stdout=subprocess.PIPE, stderr=subprocess.PIPE
    )
    print(completed.stdout.decode("utf-8"))
except subprocess.CalledProcessError as err:
    print(err.output.decode("utf-8"))
