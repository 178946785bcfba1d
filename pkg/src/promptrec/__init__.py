"""promptrec: a prompt-steerable sequential recommender built from scratch.

A compact recommender whose user representation can be steered at inference
time by natural-language prompts: positive prompts pull matching items up,
negative prompts push a named category out, and prompt-free requests fall
back to the plain sequential model.
"""

__version__ = "0.1.0"
