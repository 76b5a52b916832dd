"""medeval: build and score medical-LLM evaluators at desk scale."""

__version__ = "0.1.0"
