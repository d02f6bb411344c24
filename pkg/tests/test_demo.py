"""Corpus generator and shipped-template tests."""

from __future__ import annotations

import pytest

from modelforge import demo
from modelforge.errors import ValidationError
from modelforge.template import validate_layout


class TestGenerator:
    def test_deterministic_per_seed(self):
        a = demo.generate_corpus(17, 500, 40)
        b = demo.generate_corpus(17, 500, 40)
        assert demo.corpus_csv_bytes(a) == demo.corpus_csv_bytes(b)

    def test_different_seeds_differ(self):
        a = demo.generate_corpus(1, 100, 10)
        b = demo.generate_corpus(2, 100, 10)
        assert demo.corpus_csv_bytes(a) != demo.corpus_csv_bytes(b)

    def test_exactly_n_codes_present(self):
        records = demo.generate_corpus(17, 500, 40)
        assert len({r.failure_code for r in records}) == 40

    def test_zero_noise_labels_follow_linear_rule(self):
        for rec in demo.generate_corpus(5, 300, 10, approval_noise=0.0):
            weight = demo.PRIORITY_WEIGHT[rec.priority]
            rule = rec.cost + 1500 * weight <= demo.RULE_BOUNDARY
            assert rec.approved == rule
            # the margin band around the boundary is empty
            assert abs(rec.cost + 1500 * weight - demo.RULE_BOUNDARY) >= demo.RULE_MARGIN

    def test_noise_flips_some_labels(self):
        clean = demo.generate_corpus(5, 300, 10, approval_noise=0.0)
        noisy = demo.generate_corpus(5, 300, 10, approval_noise=0.3)
        flips = sum(1 for c, n in zip(clean, noisy) if c.approved != n.approved)
        assert flips > 0

    def test_closed_after_opened(self):
        for rec in demo.generate_corpus(17, 300, 10):
            if rec.closed_at is not None:
                assert rec.closed_at >= rec.opened_at
            else:
                assert rec.status == "open"

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            demo.generate_corpus(1, 10, 1)
        with pytest.raises(ValidationError):
            demo.generate_corpus(1, 10, 201)
        with pytest.raises(ValidationError):
            demo.generate_corpus(1, 5, 10)  # fewer rows than codes


class TestShippedTemplates:
    def test_all_templates_validate(self, tmp_path):
        for name, path in demo.write_all_templates(tmp_path / "t").items():
            report = validate_layout(path)
            assert report.ok, f"{name}: {report.summary()}"

    def test_repo_templates_match_generator(self, tmp_path):
        """The committed templates/ tree is exactly what the scaffolder emits."""
        from pathlib import Path
        repo_templates = Path(__file__).resolve().parents[1] / "templates"
        if not repo_templates.is_dir():
            pytest.skip("repo templates/ not materialized")
        from modelforge.template import package
        generated = demo.write_all_templates(tmp_path / "gen")
        for name, gen_path in generated.items():
            committed = repo_templates / name
            assert committed.is_dir(), f"templates/{name} missing"
            assert package(committed).digest == package(gen_path).digest
