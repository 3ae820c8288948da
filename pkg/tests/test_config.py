import pytest

from triplex.config import ConfigError, RunConfig, load_run_config, parse_config_text
from triplex.hrv import AnalysisConfig


class TestDefaults:
    def test_baseline(self):
        cfg = RunConfig()
        assert cfg.host == "127.0.0.1"
        assert cfg.port == 0
        assert cfg.topic == "hr/patient1"
        assert cfg.threshold == 3000
        assert cfg.decimation == 100
        assert cfg.rate == 100.0
        assert cfg.speedup == 1.0
        assert cfg.mode == "monolith"
        assert cfg.data is None
        assert cfg.validate() is cfg

    def test_analysis_carries_bounds(self):
        a = RunConfig(min_bpm=50.0, max_bpm=120.0).analysis()
        assert isinstance(a, AnalysisConfig)
        assert a.min_bpm == 50.0
        assert a.max_bpm == 120.0


class TestFileFormat:
    def test_typed_values(self):
        text = """
        # run settings
        topic = hr/ward7
        threshold = 500

        rate = 250.0
        speedup = 0
        port=1883
        """
        values = parse_config_text(text)
        assert values == {
            "topic": "hr/ward7",
            "threshold": 500,
            "rate": 250.0,
            "speedup": 0.0,
            "port": 1883,
        }

    def test_unknown_key_names_the_line(self):
        with pytest.raises(ConfigError, match=r"cfg:3: unknown key 'colour'"):
            parse_config_text("topic = a\n\ncolour = red\n", origin="cfg")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="expected key = value"):
            parse_config_text("threshold 500\n")

    @pytest.mark.parametrize("line", ["threshold = many", "rate = fast", "port = 80.5"])
    def test_bad_value_types(self, line):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config_text(line)


class TestValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            {"topic": ""},
            {"port": -1},
            {"port": 70000},
            {"threshold": 0},
            {"decimation": 0},
            {"rate": 0.0},
            {"speedup": -1.0},
            {"min_bpm": 180.0, "max_bpm": 60.0},
            {"mode": "microservice"},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw).validate()


class TestLayering:
    def test_flags_beat_file_beats_defaults(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("threshold = 100\ntopic = hr/file\n")
        cfg = load_run_config(str(path), overrides={"topic": "hr/flag", "rate": 50.0})
        assert cfg.threshold == 100  # from the file
        assert cfg.topic == "hr/flag"  # flag wins
        assert cfg.rate == 50.0  # flag on top of defaults
        assert cfg.decimation == 100  # untouched default

    def test_none_overrides_are_not_overrides(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("threshold = 77\n")
        cfg = load_run_config(str(path), overrides={"threshold": None})
        assert cfg.threshold == 77

    def test_env_var_supplies_the_path(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("decimation = 25\n")
        cfg = load_run_config(env={"TRIPLEX_CONFIG": str(path)})
        assert cfg.decimation == 25

    def test_explicit_path_beats_env(self, tmp_path):
        chosen = tmp_path / "a.conf"
        chosen.write_text("decimation = 1\n")
        other = tmp_path / "b.conf"
        other.write_text("decimation = 9\n")
        cfg = load_run_config(str(chosen), env={"TRIPLEX_CONFIG": str(other)})
        assert cfg.decimation == 1

    def test_no_file_anywhere_is_fine(self):
        cfg = load_run_config(env={})
        assert cfg == RunConfig()

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_run_config(str(tmp_path / "ghost.conf"))

    def test_merged_result_is_validated(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("threshold = 0\n")
        with pytest.raises(ConfigError, match="threshold"):
            load_run_config(str(path))
