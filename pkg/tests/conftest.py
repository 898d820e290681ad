"""Suite-wide ledgers for the weak-duality and recovery-soundness checks.

Every call to ``recover_primal`` and ``run_distributed`` made anywhere in
the suite (in this process) is recorded, and the acceptance tests, which
are moved to the end of the run, assert over the whole record.
"""
from __future__ import annotations

import pytest

import avpark
from avpark import baseline, cli, coordinator, experiments, recovery
from avpark.errors import RecoveryFailedError
from avpark.model import check_feasibility

RECOVERY_LEDGER = []   # (violations of a successful output) or ("failed", trace entries)
RUN_LEDGER = []        # (instance, report)

_orig_recover = recovery.recover_primal
_orig_run = coordinator.run_distributed


def _recording_recover(inst, a0, max_moves=None):
    try:
        a, trace = _orig_recover(inst, a0, max_moves)
    except RecoveryFailedError as exc:
        RECOVERY_LEDGER.append(("failed", exc.trace.entries()))
        raise
    RECOVERY_LEDGER.append(("ok", check_feasibility(inst, a)))
    return a, trace


def _recording_run(inst, params=coordinator.RunParams(), seed=0):
    rep = _orig_run(inst, params, seed)
    RUN_LEDGER.append((inst, rep))
    return rep


for module in (recovery, coordinator, baseline, avpark):
    module.recover_primal = _recording_recover
for module in (coordinator, experiments, cli, avpark):
    module.run_distributed = _recording_run


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.nodeid.startswith("tests/test_acceptance.py"))


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path
