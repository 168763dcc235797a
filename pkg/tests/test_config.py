import math
from pathlib import Path

import pytest

from etmeasure.config import SWEEPABLE, MODEL_KINDS, load_config, parse_config
from etmeasure.errors import ConfigFileError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TestParse:
    def test_free(self):
        cfg = parse_config("[experiment]\nkind = measure\n[model]\nkind = free\ntau = 2\n")
        assert cfg.kind == "measure"
        assert cfg.model == {"kind": "free", "tau": 2.0}
        assert len(cfg.sha256) == 64

    def test_case_sensitive_keys(self):
        cfg = parse_config("[model]\nkind = chiral\ndelta = 0.5\nDelta = 2\n")
        assert cfg.model["delta"] == 0.5 and cfg.model["Delta"] == 2.0

    def test_lists_and_auto(self):
        cfg = parse_config("[model]\nkind = free\n[sweep]\nparameter = tau\nvalues = 1, 2 3\n"
                           "[protocol]\ntau = auto\n[probe]\ngrid_window = yes\n")
        assert cfg.get("sweep", "values") == (1.0, 2.0, 3.0)
        assert cfg.get("protocol", "tau") is None
        assert cfg.get("probe", "grid_window") is True

    def test_inline_comments(self):
        cfg = parse_config("[protocol]\nmethod = exact ; rule\n[model]\nkind = free\n")
        assert cfg.get("protocol", "method") == "exact"

    def test_sweepable_keys_exist(self):
        for kind, keys in SWEEPABLE.items():
            assert set(keys) <= set(MODEL_KINDS[kind])


class TestErrors:
    @pytest.mark.parametrize("text,line", [
        ("[model]\nkind = free\nbogus = 1\n", 3),
        ("[experiment]\nkind = measure\n[model]\nkind = free\ntau = abc\n", 5),
        ("[experiment]\nkind = nope\n", 2),
        ("[nope]\nx = 1\n", 1),
        ("[model]\nkind = warp\n", 2),
    ])
    def test_line_numbers(self, text, line):
        with pytest.raises(ConfigFileError) as exc:
            parse_config(text)
        assert exc.value.line == line
        assert f"line {line}" in str(exc.value)

    def test_syntax_error(self):
        with pytest.raises(ConfigFileError):
            parse_config("not an ini file\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigFileError):
            parse_config("[model]\nkind = free\nkind = free\n")

    def test_si_only_for_spacetime(self):
        with pytest.raises(ConfigFileError):
            parse_config("[experiment]\nkind = measure\nunits = si\n[model]\nkind = free\n")

    def test_measure_needs_model(self):
        with pytest.raises(ConfigFileError):
            parse_config("[experiment]\nkind = measure\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError):
            load_config(tmp_path / "absent.ini")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.source == str(path)
    if cfg.kind == "spacetime":
        assert math.isfinite(cfg.get("spacetime", "R"))
