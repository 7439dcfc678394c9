import json
import warnings

import pytest

from ffinet.io import (
    FORMAT_VERSION,
    FormatVersionError,
    SceneFormatError,
    dumps_scene,
    loads_scene,
    read_dataset,
    read_scene,
    split_of,
    write_dataset,
    write_scene,
)
from ffinet.scene import scenes_equal


class TestSceneFiles:
    def test_round_trip(self, scenes, tmp_path):
        for s in scenes:
            p = tmp_path / f"{s.scene_id}.json"
            write_scene(s, p)
            assert scenes_equal(read_scene(p), s)

    def test_top_level_keys(self, scenes):
        d = json.loads(dumps_scene(scenes[0]))
        assert d["format_version"] == FORMAT_VERSION
        assert set(d) == {"format_version", "scene_id", "timestep_hz", "obs_len", "pred_len",
                          "focal_agent_id", "agents", "lanes"}
        assert set(d["agents"][0]) == {"id", "category", "scored", "xy", "valid"}

    def test_truncated_xy_names_field_and_line(self, scenes):
        text = dumps_scene(scenes[0])
        d = json.loads(text)
        victim = d["agents"][1]["id"]
        lines = text.splitlines()
        row = next(i for i, l in enumerate(lines) if f'"id":"{victim}"' in l)
        rec = json.loads(lines[row].strip().rstrip(","))
        rec["xy"] = rec["xy"][:-3]
        lines[row] = "    " + json.dumps(rec, separators=(",", ":")) + ","
        with pytest.raises(SceneFormatError) as err:
            loads_scene("\n".join(lines))
        assert err.value.field == "xy"
        assert err.value.line == row + 1
        assert "xy" in str(err.value)

    def test_version_mismatch(self, scenes):
        d = json.loads(dumps_scene(scenes[0]))
        d["format_version"] = "ffinet/0"
        with pytest.raises(FormatVersionError):
            loads_scene(json.dumps(d))

    def test_unknown_field_warns(self, scenes):
        d = json.loads(dumps_scene(scenes[0]))
        d["weather"] = "rain"
        d["agents"][0]["colour"] = "blue"
        with pytest.warns(UserWarning, match="unknown"):
            s = loads_scene(json.dumps(d))
        assert scenes_equal(s, scenes[0])

    def test_malformed_json_line(self):
        with pytest.raises(SceneFormatError) as err:
            loads_scene('{\n  "format_version": "ffinet/1",\n  oops\n}')
        assert err.value.line == 3

    def test_missing_field(self, scenes):
        d = json.loads(dumps_scene(scenes[0]))
        del d["lanes"][0]["points"]
        with pytest.raises(SceneFormatError, match="points"):
            loads_scene(json.dumps(d))


class TestDataset:
    def test_split_layout(self, scenes, tmp_path):
        counts = write_dataset(scenes, tmp_path, seed=1)
        assert sum(counts.values()) == len(scenes)
        got = sum(len(read_dataset(tmp_path, k)) for k in ("train", "val", "test"))
        assert got == len(scenes)
        for split in counts:
            for s in read_dataset(tmp_path, split):
                assert split_of(s.scene_id, 1) == split

    def test_split_is_stable(self):
        ids = [f"x-{k}" for k in range(500)]
        a = [split_of(i, 4) for i in ids]
        assert a == [split_of(i, 4) for i in ids]
        frac = a.count("train") / len(a)
        assert 0.6 < frac < 0.8

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope"):
            read_dataset(tmp_path / "nope")

    def test_no_warning_on_clean_file(self, scenes, tmp_path):
        write_scene(scenes[0], tmp_path / "a.json")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            read_scene(tmp_path / "a.json")
