"""Shared pytest wiring: a terminal summary line per acceptance criterion."""

_CRITERIA = [
    ("test_c01_gradient_check",
     "analytic hinge gradients match central differences within 1e-4"),
    ("test_c02_planted_kb_mrr",
     "planted knowledge base reaches MRR >= 0.5 under object ranking"),
    ("test_c03_association_oracle",
     "4-count association example within 1e-4 of hand arithmetic"),
    ("test_c04_planted_partition_recovery",
     "kmeans/spectral/signed recover planted partitions at ARI 1.0"),
    ("test_c05_unsigned_reduction",
     "signed clustering equals unsigned on nonnegative affinities"),
    ("test_c06_sense_inventory_contract",
     "inventory-driven sense counts and exact centroid means"),
    ("test_c07_sense_separation",
     "planted two-sense verb separated at every global k >= 2"),
    ("test_c08_end_to_end_classification",
     "typed features F1 >= 0.90, beating verb bags by >= 0.10"),
    ("test_c09_stage_determinism",
     "every stage byte-identical across reruns"),
    ("test_c10_count_conservation",
     "feature counts equal kernel counts on 1000 random messages"),
]

_outcomes = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if any(name == fn for fn, _ in _CRITERIA):
        _outcomes[name] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for i, (fn, description) in enumerate(_CRITERIA, start=1):
        if fn not in _outcomes:
            continue
        status = {"passed": "PASS", "failed": "FAIL"}.get(
            _outcomes[fn], _outcomes[fn].upper())
        terminalreporter.write_line(f"criterion {i:>2}: {status} — {description}")
