"""Shared fixtures: a built synthetic domain and helpers to mint fresh cases."""

from __future__ import annotations

import itertools

import pytest

from lexdraft.corpus import generate_synthetic_corpus, ingest_corpus, synthesize_cases
from lexdraft.pipeline import Registry, build_domain_index, ensure_domain_config

CORPUS_SEED = 11
CORPUS_LETTERS = 120


def build_domain_root(root, domain_id="waste", n_letters=CORPUS_LETTERS, seed=CORPUS_SEED, **config_overrides):
    """Create a full domain under ``root``: config, chunk store, vector index."""
    config = ensure_domain_config(root, domain_id, **config_overrides)
    summary = ingest_corpus(
        generate_synthetic_corpus(seed, n_letters, domain_id),
        domain_id,
        root / config.chunk_store_path,
    )
    assert not summary.errors
    build_domain_index(root, config)
    return config


@pytest.fixture(scope="session")
def domain_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("domain")
    build_domain_root(root)
    return root


@pytest.fixture(scope="session")
def registry(domain_root):
    return Registry(domain_root)


@pytest.fixture(scope="session")
def runtime(registry):
    return registry.runtime("waste")


@pytest.fixture(scope="session")
def deid_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("deid_domain")
    build_domain_root(root, deid_enabled=True)
    return root


@pytest.fixture(scope="session")
def deid_runtime(deid_root):
    return Registry(deid_root).runtime("waste")


_case_counter = itertools.count(1000)


@pytest.fixture
def fresh_case():
    """A new synthetic case with an id unused by any other test."""

    def _make(**overrides):
        seed = next(_case_counter)
        synthetic = synthesize_cases(seed, 1, "waste")[0]
        case = synthetic.case
        if overrides:
            from dataclasses import replace

            case = replace(case, **overrides)
        return synthetic, case

    return _make
