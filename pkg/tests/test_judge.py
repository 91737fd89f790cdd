"""Judge prompt, verdict parsing, heuristic and remote judges, decision cache."""

import json

import numpy as np
import pytest

from layoutpref.errors import JudgeUnavailableError, UnparsableVerdictError
from layoutpref.judge import (
    DecisionCache,
    HeuristicJudge,
    JudgeConfig,
    JudgeDecision,
    RemoteJudge,
    cached_compare,
    compare_remote,
    judge_prompt,
    layout_hash,
    parse_decision,
)
from layoutpref.metrics import quality
from layoutpref.render import render

from conftest import make_layout


def aligned_layout():
    return make_layout([(25, 25, 20, 20), (75, 25, 20, 20), (25, 75, 20, 20), (75, 75, 20, 20)])


def stacked_layout():
    return make_layout([(10, 10, 5, 5), (10, 10, 5, 5)])


class TestPrompt:
    def test_contains_verdict_key(self):
        assert '"better_layout"' in judge_prompt()

    def test_exactly_five_criteria_lines(self):
        criteria = ("Aesthetics:", "Clarity:", "Usability:", "Creativity:", "Consistency:")
        lines = [l for l in judge_prompt().splitlines() if l.startswith(criteria)]
        assert len(lines) == 5

    def test_byte_stable(self):
        assert judge_prompt() == judge_prompt()

    def test_answer_alphabet_documented(self):
        assert "image_1" in judge_prompt() and "image_2" in judge_prompt()


class TestParseDecision:
    def test_plain_verdicts(self):
        assert parse_decision('{"better_layout": "image_1"}').d == 1
        assert parse_decision('{"better_layout": "image_2"}').d == 2

    def test_wrapped_text(self):
        assert parse_decision('Sure! {"better_layout": "image_2"} Hope this helps.').d == 2

    def test_out_of_alphabet_value(self):
        with pytest.raises(UnparsableVerdictError):
            parse_decision('{"better_layout": "image_3"}')

    def test_no_object(self):
        with pytest.raises(UnparsableVerdictError):
            parse_decision("image_1 looks best to me")

    def test_decision_domain(self):
        with pytest.raises(ValueError):
            JudgeDecision(d=3)


class TestHeuristicJudge:
    def test_higher_quality_wins(self):
        judge = HeuristicJudge()
        assert judge.compare(aligned_layout(), stacked_layout()).d == 1
        assert judge.compare(stacked_layout(), aligned_layout()).d == 2
        assert judge.calls == 2

    def test_tie_goes_to_second_input(self):
        judge = HeuristicJudge()
        assert judge.compare(aligned_layout(), aligned_layout()).d == 2

    def test_winner_quality_dominates(self):
        judge = HeuristicJudge()
        g1, g2 = aligned_layout(), stacked_layout()
        decision = judge.compare(g1, g2)
        winner, loser = (g1, g2) if decision.d == 1 else (g2, g1)
        assert quality(winner).q >= quality(loser).q


class TestCompareRemote:
    def imgs(self):
        img1 = render(aligned_layout())
        img2 = render(stacked_layout())
        return img1, img2

    def test_round_trips_both_verdicts(self, stub_judge):
        cfg = JudgeConfig(endpoint=stub_judge.endpoint, model_name="stub", timeout=5)
        img1, img2 = self.imgs()
        stub_judge.set_default('{"better_layout": "image_1"}')
        assert compare_remote(cfg, img1, img2).d == 1
        stub_judge.set_default('{"better_layout": "image_2"}')
        assert compare_remote(cfg, img1, img2).d == 2
        assert stub_judge.requests[0]["n_images"] == 2
        assert stub_judge.requests[0]["model"] == "stub"

    def test_retries_then_succeeds_on_third_attempt(self, stub_judge):
        cfg = JudgeConfig(endpoint=stub_judge.endpoint, model_name="stub", timeout=5, max_retries=3)
        stub_judge.script((200, "no verdict here"), (200, "still nothing"), (200, '{"better_layout": "image_2"}'))
        img1, img2 = self.imgs()
        assert compare_remote(cfg, img1, img2).d == 2
        assert stub_judge.hits == 3

    def test_exhausted_retries(self, stub_judge):
        cfg = JudgeConfig(endpoint=stub_judge.endpoint, model_name="stub", timeout=5, max_retries=2)
        stub_judge.set_default("garbage")
        img1, img2 = self.imgs()
        with pytest.raises(JudgeUnavailableError):
            compare_remote(cfg, img1, img2)
        assert stub_judge.hits == 3  # 1 attempt + 2 retries

    def test_unreachable_endpoint(self):
        cfg = JudgeConfig(endpoint="http://127.0.0.1:1", model_name="stub", timeout=0.2, max_retries=1)
        img = np.zeros((4, 4, 4), dtype=np.uint8)
        with pytest.raises(JudgeUnavailableError):
            compare_remote(cfg, img, img)

    def test_api_key_header(self, stub_judge, monkeypatch):
        monkeypatch.setenv("JUDGE_API_KEY", "sk-test")
        cfg = JudgeConfig(endpoint=stub_judge.endpoint, model_name="stub", timeout=5)
        img1, img2 = self.imgs()
        compare_remote(cfg, img1, img2)
        assert stub_judge.requests[0]["auth"] == "Bearer sk-test"

    def test_swap_and_vote_consistent(self, stub_judge):
        cfg = JudgeConfig(
            endpoint=stub_judge.endpoint, model_name="stub", timeout=5, swap_and_vote=True
        )
        # image_1 then image_2: consistent winner is the first input
        stub_judge.script((200, '{"better_layout": "image_1"}'), (200, '{"better_layout": "image_2"}'))
        img1, img2 = self.imgs()
        decision = compare_remote(cfg, img1, img2)
        assert decision.d == 1 and not decision.swapped
        assert stub_judge.hits == 2

    def test_swap_and_vote_disagreement_falls_back(self, stub_judge):
        cfg = JudgeConfig(
            endpoint=stub_judge.endpoint, model_name="stub", timeout=5, swap_and_vote=True
        )
        stub_judge.set_default('{"better_layout": "image_1"}')  # position-biased stub
        g1, g2 = aligned_layout(), stacked_layout()
        decision = compare_remote(cfg, render(g1), render(g2), layouts=(g1, g2))
        assert decision.swapped
        assert decision.d == 1  # heuristic fallback prefers the aligned layout


class TestRemoteJudge:
    def test_compare_layouts(self, stub_judge):
        cfg = JudgeConfig(endpoint=stub_judge.endpoint, model_name="stub", timeout=5)
        judge = RemoteJudge(cfg)
        stub_judge.set_default('{"better_layout": "image_2"}')
        assert judge.compare(aligned_layout(), stacked_layout()).d == 2
        assert judge.calls == 1
        assert judge.judge_id == "remote:stub"


class TestDecisionCache:
    def test_second_call_hits_cache(self, tmp_path):
        cache = DecisionCache(tmp_path / "cache.jsonl")
        judge = HeuristicJudge()
        g1, g2 = aligned_layout(), stacked_layout()
        d1 = cached_compare(cache, judge, g1, g2)
        d2 = cached_compare(cache, judge, g1, g2)
        assert judge.calls == 1
        assert (d1.d, d2.d) == (1, 1)
        assert cache.hits == 1 and cache.misses == 1

    def test_swapped_inputs_are_distinct_keys(self, tmp_path):
        cache = DecisionCache(tmp_path / "cache.jsonl")
        judge = HeuristicJudge()
        g1, g2 = aligned_layout(), stacked_layout()
        cached_compare(cache, judge, g1, g2)
        cached_compare(cache, judge, g2, g1)
        assert judge.calls == 2

    def test_cache_persists_across_reopen(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        judge = HeuristicJudge()
        g1, g2 = aligned_layout(), stacked_layout()
        cached_compare(DecisionCache(path), judge, g1, g2)
        reopened = DecisionCache(path)
        cached_compare(reopened, judge, g1, g2)
        assert judge.calls == 1

    def test_corrupt_line_skipped_and_rerun(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        judge = HeuristicJudge()
        g1, g2 = aligned_layout(), stacked_layout()
        cached_compare(DecisionCache(path), judge, g1, g2)
        lines = path.read_text().splitlines()
        path.write_text("{corrupt!!\n")
        reopened = DecisionCache(path)
        assert len(reopened.entries) == 0
        cached_compare(reopened, judge, g1, g2)
        assert judge.calls == 2  # decision was re-run after the corrupt line was dropped
        # and the line written on re-run matches the original decision
        d_orig = json.loads(lines[0])["d"]
        d_new = json.loads(path.read_text().splitlines()[-1])["d"]
        assert d_orig == d_new

    def test_cache_error_swallowed(self, tmp_path, monkeypatch):
        from layoutpref.errors import CacheError

        cache = DecisionCache(tmp_path / "cache.jsonl")

        def raise_cache_error(self, key, decision):
            raise CacheError("disk full")

        monkeypatch.setattr(DecisionCache, "put", raise_cache_error)
        judge = HeuristicJudge()
        decision = cached_compare(cache, judge, aligned_layout(), stacked_layout())
        assert decision.d == 1  # judging proceeded uncached

    def test_layout_hash_distinguishes_layouts(self):
        assert layout_hash(aligned_layout()) != layout_hash(stacked_layout())
        assert layout_hash(aligned_layout()) == layout_hash(aligned_layout())
