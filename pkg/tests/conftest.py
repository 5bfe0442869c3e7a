import pytest

from semfml.cost_model import SUProfile
from semfml.harness.scenario import default_network, default_payload, sample_su_profiles


@pytest.fixture
def net():
    return default_network(rb_count=4)


@pytest.fixture
def sizes():
    return default_payload()


def make_su(k=0, **kw):
    base = dict(id=k, channel_gain=1e-11, cpu_max=2e9, power_max=0.2, capacitance=2e-28,
                intensity=1 / 32, workload=1e6, batch=64, dataset_size=100)
    base.update(kw)
    return SUProfile(**base)


def partial_matchings(K, R):
    """Every injective partial map from rows to columns, as (row, col) lists."""
    def rec(k, used):
        if k == K:
            yield []
            return
        yield from rec(k + 1, used)
        for n in range(R):
            if n not in used:
                for rest in rec(k + 1, used | {n}):
                    yield [(k, n)] + rest
    return list(rec(0, frozenset()))


def random_instance(seed, K, R):
    return sample_su_profiles(seed, K), default_network(rb_count=R), default_payload()


def config_dict(**sections):
    """The bundled default config as a dict, shrunk for tests.

    Section overrides are merged key by key, except ``task`` and ``model``,
    which are replaced whole.
    """
    import yaml
    from semfml.harness.config import default_config_text
    raw = yaml.safe_load(default_config_text())
    raw["users"]["count"] = 6
    raw["network"]["rb_count"] = 3
    raw["schedule"].update(rounds=2, batch=8)
    for name, value in sections.items():
        if name not in ("task", "model") and isinstance(value, dict) and isinstance(raw.get(name), dict):
            raw[name].update(value)
        else:
            raw[name] = value
    return raw


def small_config(**sections):
    from semfml.harness.config import from_dict
    return from_dict(config_dict(**sections))


# -- acceptance report: one PASS/FAIL line per criterion, echoed in the summary

ACCEPTANCE = {}


def report(number: int, title: str, passed: bool, detail: str = "") -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
