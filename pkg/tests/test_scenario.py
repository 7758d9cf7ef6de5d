import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ralab.scenario import (
    Scenario,
    ScenarioError,
    apply_overrides,
    emit_scenario,
    parse_scenario,
    read_scenario,
)


class TestDefaults:
    def test_empty_text_gives_defaults(self):
        assert parse_scenario("") == Scenario()

    def test_comments_and_blanks_ignored(self):
        text = "\n# a comment\n   \nn_cr = 8  # trailing comment\n"
        assert parse_scenario(text) == Scenario(n_cr=8)

    def test_default_split(self):
        sc = Scenario()
        assert sc.n_total == 64
        assert sc.n_cf == 10
        assert sc.n_cb + sc.n_cr == 54

    def test_duration_slots(self):
        assert Scenario(duration_ms=10.0, t_tti_ms=0.5).duration_slots == 20


class TestParseErrors:
    def test_unknown_key_names_line(self):
        with pytest.raises(ScenarioError, match=r"line 2: unknown key 'n_crx'"):
            parse_scenario("n_cr = 4\nn_crx = 5\n")

    def test_bad_value_names_line_and_type(self):
        with pytest.raises(ScenarioError, match=r"line 1:.*'abc'.*int"):
            parse_scenario("n_cr = abc\n")

    def test_missing_equals(self):
        with pytest.raises(ScenarioError, match=r"line 1: expected 'key = value'"):
            parse_scenario("just some words\n")

    def test_duplicate_key_reports_both_lines(self):
        with pytest.raises(ScenarioError, match=r"line 3:.*already set on line 1"):
            parse_scenario("n_cr = 4\n\nn_cr = 5\n")

    def test_empty_value(self):
        with pytest.raises(ScenarioError, match=r"line 1:.*no value"):
            parse_scenario("n_cr =\n")

    def test_split_overflow_named_by_key(self):
        # n_cr = 60 leaves n_cb negative under n_cb + n_cr = 54
        with pytest.raises(ScenarioError, match=r"n_cr=60.*n_cb=-6"):
            parse_scenario("n_cr = 60\n")

    def test_range_violations_named_by_key(self):
        for text, key in [
            ("duration_ms = -1", "duration_ms"),
            ("t_p = 4", "t_p"),
            ("estimator_mode = sometimes", "estimator_mode"),
            ("detection = psychic", "detection"),
            ("max_attempts = 0", "max_attempts"),
            ("r_threshold = 1", "r_threshold"),
            ("var_threshold = 0.0", "var_threshold"),
        ]:
            with pytest.raises(ScenarioError, match=key.split("_")[0]):
                parse_scenario(text + "\n")

    def test_even_r_threshold_rejected_for_t_p_2(self):
        with pytest.raises(ScenarioError, match="odd"):
            Scenario(t_p=2, r_threshold=10)
        Scenario(t_p=2, r_threshold=11)  # odd is fine

    def test_event_devices_need_two_preambles(self):
        with pytest.raises(ScenarioError, match="n_cr"):
            Scenario(n_cr=1, twostep_n_event=5)


class TestRoundTrip:
    def test_default_round_trip_exact(self):
        sc = Scenario()
        assert parse_scenario(emit_scenario(sc)) == sc

    @given(
        duration_ms=st.floats(min_value=1.0, max_value=1e6, allow_nan=False),
        t_p=st.sampled_from([1, 2, 3]),
        n_cr=st.integers(min_value=2, max_value=54),
        mode=st.sampled_from(["on", "off", "oracle"]),
        n_periodic=st.integers(min_value=0, max_value=5000),
        n_event=st.integers(min_value=0, max_value=5000),
        period=st.floats(min_value=1.0, max_value=1e4, allow_nan=False),
        rate=st.floats(min_value=1e-3, max_value=1e3, allow_nan=False),
        r_threshold=st.integers(min_value=2, max_value=50),
    )
    @settings(max_examples=100, deadline=None)
    def test_round_trip_is_exact(self, duration_ms, t_p, n_cr, mode,
                                 n_periodic, n_event, period, rate, r_threshold):
        if t_p == 2 and r_threshold % 2 == 0:
            r_threshold += 1
        sc = Scenario(
            duration_ms=duration_ms, t_p=t_p, n_cr=n_cr, estimator_mode=mode,
            twostep_n_periodic=n_periodic, twostep_n_event=n_event,
            twostep_period_ms=period, twostep_event_rate_per_s=rate,
            r_threshold=r_threshold,
        )
        again = parse_scenario(emit_scenario(sc))
        assert again == sc  # dataclass equality covers every field exactly

    def test_file_round_trip(self, tmp_path):
        sc = Scenario(n_cr=29, fourstep_n_ue=23_000, fourstep_rate_per_s=0.5,
                      twostep_n_periodic=700, twostep_n_event=300)
        path = tmp_path / "case.scn"
        path.write_text(emit_scenario(sc), encoding="utf-8")
        assert read_scenario(path) == sc


class TestOverrides:
    def test_override_applies(self):
        sc = apply_overrides(Scenario(), ["n_cr=8", "duration_ms=123.5"])
        assert sc.n_cr == 8
        assert sc.duration_ms == 123.5

    def test_dotted_traffic_keys(self):
        sc = apply_overrides(Scenario(), ["traffic.fourstep.n_ue=100"])
        assert sc.fourstep_n_ue == 100

    def test_unknown_override_key(self):
        with pytest.raises(ScenarioError, match=r"override 1: unknown key"):
            apply_overrides(Scenario(), ["bogus=1"])

    def test_override_without_value(self):
        with pytest.raises(ScenarioError, match=r"override 1"):
            apply_overrides(Scenario(), ["n_cr"])

    def test_overridden_scenario_still_validated(self):
        with pytest.raises(ScenarioError):
            apply_overrides(Scenario(), ["n_cr=60"])


class TestImmutability:
    def test_frozen(self):
        sc = Scenario()
        with pytest.raises(dataclasses.FrozenInstanceError):
            sc.n_cr = 5
