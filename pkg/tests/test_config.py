import pytest

from blockcoder.config import load_config
from blockcoder.errors import ConfigError


def write_config(tmp_path, text):
    path = tmp_path / "config.toml"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestDefaults:
    def test_no_file_gives_offline_defaults(self):
        config = load_config()
        assert config.client.backend == "mock"
        assert config.renderer.backend == "stub"
        assert config.embedder.backend == "stub"
        assert config.prompt.variant == "full"
        assert config.seed == 2026
        assert config.divider.grid_interval == 5
        assert config.divider.min_line_distance == 50
        assert config.divider.min_block_area == 90000
        assert config.ocr.merge_gap == 20

    def test_snapshot_round_trips_every_section(self):
        snapshot = load_config().snapshot()
        assert set(snapshot) == {
            "divider", "ocr", "client", "prompt", "renderer", "embedder", "pipeline",
        }
        assert snapshot["pipeline"]["seed"] == 2026


class TestFileLoading:
    def test_sections_are_applied(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [divider]
            grid_interval = 2
            min_line_distance = 30

            [client]
            backend = "mock"
            max_concurrency = 2

            [pipeline]
            seed = 7
            output_dir = "out"
            """,
        )
        config = load_config(path)
        assert config.divider.grid_interval == 2
        assert config.divider.min_line_distance == 30
        assert config.client.max_concurrency == 2
        assert config.seed == 7
        assert config.output_dir == "out"

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("nope.toml")

    def test_invalid_toml(self, tmp_path):
        with pytest.raises(ConfigError, match="TOML"):
            load_config(write_config(tmp_path, "[divider"))

    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="mystery"):
            load_config(write_config(tmp_path, "[mystery]\nx = 1\n"))

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="grid_spacing"):
            load_config(write_config(tmp_path, "[divider]\ngrid_spacing = 5\n"))

    def test_invalid_value_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="divider"):
            load_config(write_config(tmp_path, "[divider]\ngrid_interval = 0\n"))

    def test_wrong_type_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="grid_interval"):
            load_config(write_config(tmp_path, '[divider]\ngrid_interval = "five"\n'))

    def test_command_renderer_requires_placeholders(self, tmp_path):
        with pytest.raises(ConfigError, match="placeholder"):
            load_config(
                write_config(
                    tmp_path,
                    '[renderer]\nbackend = "command"\ncommand_template = "chromium {html}"\n',
                )
            )

    def test_bad_prompt_variant(self, tmp_path):
        with pytest.raises(ConfigError, match="variant"):
            load_config(write_config(tmp_path, '[prompt]\nvariant = "chatty"\n'))


class TestOverrides:
    def test_string_values_coerced(self, tmp_path):
        config = load_config(
            None,
            {
                "divider.grid_interval": "3",
                "client.backend": "mock",
                "renderer.synthetic_fallback": "false",
                "pipeline.output_dir": str(tmp_path),
            },
        )
        assert config.divider.grid_interval == 3
        assert config.renderer.synthetic_fallback is False
        assert config.output_dir == str(tmp_path)

    def test_overrides_beat_file_values(self, tmp_path):
        path = write_config(tmp_path, "[divider]\ngrid_interval = 2\n")
        config = load_config(path, {"divider.grid_interval": "9"})
        assert config.divider.grid_interval == 9

    def test_none_overrides_are_ignored(self):
        config = load_config(None, {"client.backend": None})
        assert config.client.backend == "mock"

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError, match="unknown override"):
            load_config(None, {"nonsense": "1"})

    def test_bad_boolean_override(self):
        with pytest.raises(ConfigError, match="boolean"):
            load_config(None, {"renderer.synthetic_fallback": "perhaps"})
