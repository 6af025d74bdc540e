"""cdw: a miniature clinical data warehouse for cancer-registry data.

Pipeline: extract sources into staging, clean/dedup/conform, load the star
schema incrementally, then query it through OLAP cubes, canned reports, a CLI
and an HTTP service with a pivot UI.
"""

__version__ = "0.1.0"
