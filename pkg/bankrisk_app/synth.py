import logging
import re
from dataclasses import dataclass

import numpy as np

from .dataset import ACTIVE, BANKRUPT, BankRecord, Dataset, FeatureSchema, Quarter
from .errors import ConfigError


logger = logging.getLogger("BankRisk.synth")

RECIPES = ("gaussian-sep<d>", "xor-pair", "xor-skew", "quarterly-decline")

_GAUSSIAN_PATTERN = re.compile(r"^gaussian-sep(\d+(?:\.\d+)?)$")
_XOR_CELL_NOISE = 0.35
_XOR_SKEW_SHARE = 0.9
_QUARTERLY_SEPARATION = 3.0


@dataclass(frozen=True)
class RatioProfile:
    offset: np.ndarray
    scale: np.ndarray

    @classmethod
    def for_schema(cls, schema: FeatureSchema) -> "RatioProfile":
        # fixed per schema so datasets from different seeds share units
        rng = np.random.default_rng(len(schema))
        return cls(
            offset=rng.uniform(-0.5, 1.5, size=len(schema)),
            scale=10.0 ** rng.uniform(-2.0, 0.5, size=len(schema)),
        )

    def to_ratios(self, latent: np.ndarray) -> np.ndarray:
        return self.offset + self.scale * latent


def _labels(n_active: int, n_bankrupt: int) -> np.ndarray:
    return np.array([ACTIVE] * n_active + [BANKRUPT] * n_bankrupt, dtype=int)


def _gaussian_latent(labels: np.ndarray, width: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    shift = separation / np.sqrt(width)
    return rng.standard_normal((labels.shape[0], width)) + shift * labels[:, np.newaxis]


def _xor_latent(labels: np.ndarray, width: int, positive_share: float, rng: np.random.Generator) -> np.ndarray:
    if width < 2:
        raise ConfigError("XOR recipes need at least two features")
    first = np.where(rng.random(labels.shape[0]) < 0.5, 1.0, -1.0)
    bankrupt_first = np.where(rng.random(labels.shape[0]) < positive_share, 1.0, -1.0)
    first = np.where(labels == BANKRUPT, bankrupt_first, first)
    # bankrupt banks share the sign across groups, active banks flip it
    second = np.where(labels == BANKRUPT, first, -first)
    signs = np.where(np.arange(width) % 2 == 0, first[:, np.newaxis], second[:, np.newaxis])
    return signs + _XOR_CELL_NOISE * rng.standard_normal((labels.shape[0], width))


def _records(schema: FeatureSchema, ratios: np.ndarray, labels: np.ndarray) -> tuple[BankRecord, ...]:
    return tuple(
        BankRecord(f"bank-{index + 1:04d}", None, tuple(float(value) for value in ratios[index]), int(labels[index]))
        for index in range(labels.shape[0])
    )


def _quarterly(
    schema: FeatureSchema,
    labels: np.ndarray,
    quarters: int,
    start: Quarter,
    rng: np.random.Generator,
) -> tuple[BankRecord, ...]:
    if quarters < 1:
        raise ConfigError(f"quarterly-decline needs at least one quarter, got {quarters}")
    profile = RatioProfile.for_schema(schema)
    shift = _QUARTERLY_SEPARATION / np.sqrt(len(schema))
    records: list[BankRecord] = []
    for bank, label in enumerate(labels):
        for step in range(quarters):
            progress = (step + 1) / quarters if label == BANKRUPT else 0.0
            latent = rng.standard_normal(len(schema)) * 0.6 + shift * progress**2
            records.append(
                BankRecord(
                    bank_id=f"bank-{bank + 1:04d}",
                    period=start.shift(step),
                    values=tuple(float(value) for value in profile.to_ratios(latent)),
                    label=int(label),
                )
            )
    return tuple(records)


def generate(
    recipe: str,
    n_active: int,
    n_bankrupt: int,
    schema: FeatureSchema,
    seed: int,
    quarters: int = 8,
    start: Quarter = Quarter(2016, 1),
) -> Dataset:
    """Build a seeded dataset from one of ``RECIPES``.

    ``xor-pair`` labels a bank bankrupt when its even- and odd-indexed feature
    groups share a sign; ``xor-skew`` puts 90% of bankrupt banks in the
    positive cell. ``quarterly-decline`` returns one report per bank and quarter.
    """
    if n_active < 1 or n_bankrupt < 1:
        raise ConfigError(f"Both class counts must be at least 1, got {n_active} active / {n_bankrupt} bankrupt")
    rng = np.random.default_rng(seed)
    labels = _labels(n_active, n_bankrupt)
    width = len(schema)

    gaussian = _GAUSSIAN_PATTERN.match(recipe)
    if gaussian:
        latent = _gaussian_latent(labels, width, float(gaussian.group(1)), rng)
    elif recipe == "xor-pair":
        latent = _xor_latent(labels, width, 0.5, rng)
    elif recipe == "xor-skew":
        latent = _xor_latent(labels, width, _XOR_SKEW_SHARE, rng)
    elif recipe == "quarterly-decline":
        dataset = Dataset(schema, _quarterly(schema, labels, quarters, start, rng))
        logger.info("synth recipe=%s banks=%s reports=%s", recipe, labels.shape[0], dataset.n)
        return dataset
    else:
        raise ConfigError(f"Unknown recipe {recipe!r}; expected one of {RECIPES}")

    dataset = Dataset(schema, _records(schema, RatioProfile.for_schema(schema).to_ratios(latent), labels))
    logger.info("synth recipe=%s active=%s bankrupt=%s features=%s", recipe, n_active, n_bankrupt, width)
    return dataset
