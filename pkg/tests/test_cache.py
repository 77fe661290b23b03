import threading

from zal.cache import COLUMNS, ENV_VAR, EvalCache, cache_io, resolve_cache_path


def test_round_trip(tmp_path):
    p = tmp_path / "c.csv"
    c = cache_io(p)
    c.put("S", 0, 0.5, 100.0, 0.0, -0.0024099022718167798, 0.0, 1e-12)
    c.put("Sn", 2, 0.6, 1 / 3, 1e-10, 0.1, 0.2, 3e-11)
    again = cache_io(p)
    assert len(again) == 2
    assert again.get("S", 0, 0.5, 100.0, 0.0) == (-0.0024099022718167798, 0.0, 1e-12)
    assert again.get("Sn", 2, 0.6, 1 / 3, 1e-10) == (0.1, 0.2, 3e-11)
    assert again.get("Sn", 2, 0.6, 0.3333, 1e-10) is None
    assert p.read_text().splitlines()[0] == ",".join(COLUMNS)


def test_lowest_error_wins(tmp_path):
    p = tmp_path / "c.csv"
    c = EvalCache(p)
    c.put("S", 0, 0.5, 10.0, 0.0, 1.0, 0.0, 1e-6)
    c.put("S", 0, 0.5, 10.0, 0.0, 2.0, 0.0, 1e-9)
    c.put("S", 0, 0.5, 10.0, 0.0, 3.0, 0.0, 1e-3)
    assert EvalCache(p).get("S", 0, 0.5, 10.0, 0.0) == (2.0, 0.0, 1e-9)
    assert len(p.read_text().splitlines()) == 4  # append-only


def test_corrupt_rows_skipped(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text(",".join(COLUMNS) + "\n"
                 "S,0,0.5,10.0,0.0,1.0,0.0,1e-9\n"
                 "S,zero,0.5,11.0,0.0,1.0,0.0,1e-9\n"
                 "S,0,0.5\n"
                 "S,0,0.5,12.0,0.0,1.0,0.0,-1\n")
    c = EvalCache(p)
    assert len(c) == 1 and c.skipped == 3


def test_concurrent_writers(tmp_path):
    p = tmp_path / "c.csv"
    c = EvalCache(p)

    def work(k):
        for i in range(50):
            c.put("S", k, 0.5, float(i), 0.0, float(i), 0.0, 0.0)

    threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    again = EvalCache(p)
    assert len(again) == 200 and again.skipped == 0


def test_resolve_path(monkeypatch, tmp_path):
    monkeypatch.delenv(ENV_VAR, raising=False)
    assert resolve_cache_path() is None
    monkeypatch.setenv(ENV_VAR, str(tmp_path / "env.csv"))
    assert resolve_cache_path() == tmp_path / "env.csv"
    assert resolve_cache_path(str(tmp_path / "flag.csv")) == tmp_path / "flag.csv"
