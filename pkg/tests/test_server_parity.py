"""Secondary-component acceptance: parity with the reference model server.

These tests need the TypeScript server built (server/dist/main.js); they
skip cleanly otherwise, so the primary suite runs with no server build.
The golden-transcript check, however, is pure Python (it verifies the
committed bytes against an independent responder) and always runs.
"""

from __future__ import annotations

import json
import re
import subprocess
import time
from pathlib import Path

import numpy as np
import pytest

from seqquery.estimators import importance_sampling
from seqquery.models import NGramModel, fit_ngram
from seqquery.queries import Vocab, make_count, make_hitting_time, make_kth_marginal
from seqquery.remote import (
    RemoteModel,
    RemoteModelUnavailable,
    StdioTransport,
    TcpTransport,
    encode_logp,
)

ROOT = Path(__file__).resolve().parent.parent
SERVER_MAIN = ROOT / "server" / "dist" / "main.js"
TESTDATA = ROOT / "server" / "testdata"

needs_server = pytest.mark.skipif(
    not SERVER_MAIN.exists(), reason="model server not built (run `npm run build` in server/)"
)

BATCH_CAP = 64


def expected_response(model: NGramModel, doc, state: dict) -> dict:
    """Engine-side restatement of the protocol contract (the server must
    produce these bytes; see the golden transcript)."""
    if isinstance(doc, dict) and doc.get("op") == "hello":
        return {"V": model.vocab.size, "model": "abab"}
    if isinstance(doc, dict) and doc.get("op") == "batch":
        reqs = doc.get("requests")
        if not isinstance(reqs, list):
            return {"id": None, "error": "batch needs a requests array"}
        if len(reqs) > BATCH_CAP:
            return {"id": None, "error": "batch cap exceeded"}
        return {"responses": [_answer(model, r, state) for r in reqs]}
    return _answer(model, doc, state)


def _answer(model: NGramModel, doc, state: dict) -> dict:
    rid = doc.get("id") if isinstance(doc, dict) else None
    if not isinstance(rid, int) or isinstance(rid, bool):
        return {"id": None, "error": "missing id"}
    if rid <= state["last_id"]:
        return {"id": rid, "error": "ids must be strictly increasing"}
    ctx = list(doc.get("history") or []) + list(doc.get("prefix") or [])
    if any((not isinstance(t, int)) or t < 0 or t >= model.vocab.size for t in ctx):
        return {"id": rid, "error": "token out of range"}
    logp = model._next_logp(tuple(ctx))
    state["last_id"] = rid
    return {"id": rid, "logp": encode_logp(logp)}


class TestGoldenTranscript:
    def test_bytes_match_engine_side(self):
        model = NGramModel.from_json((TESTDATA / "abab.json").read_text())
        lines = (TESTDATA / "golden_transcript.jsonl").read_text().splitlines()
        assert len(lines) % 2 == 0 and lines
        state = {"last_id": -1}
        for i in range(0, len(lines), 2):
            request, expected = lines[i], lines[i + 1]
            try:
                doc = json.loads(request)
            except json.JSONDecodeError:
                resp = {"id": None, "error": "malformed JSON"}
            else:
                resp = expected_response(model, doc, state)
            assert json.dumps(resp, separators=(",", ":")) == expected


@pytest.fixture(scope="module")
def parity_setup(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("server")
    corpus = "the quick brown fox jumps over the lazy dog " * 4
    model = fit_ngram(corpus, order=2, delta=1.0, tokenization="char")
    model_file = tmp / "corpus_ngram.json"
    model_file.write_text(model.to_json())
    return model, model_file


def spawn_stdio(model_file: Path) -> RemoteModel:
    return RemoteModel(
        StdioTransport(["node", str(SERVER_MAIN), "--model", str(model_file), "--transport", "stdio"])
    )


@needs_server
class TestStdioParity:
    def test_is_estimates_match_in_process_10_instances(self, parity_setup):
        model, model_file = parity_setup
        remote = spawn_stdio(model_file)
        try:
            assert remote.vocab.size == model.vocab.size
            V = model.vocab.size
            vocab = Vocab(V)
            instances = []
            for i in range(10):
                kind = i % 3
                K = 2 + (i % 3)
                if kind == 0:
                    q = make_hitting_time({i % V}, K, vocab)
                elif kind == 1:
                    q = make_kth_marginal(i % V, K, vocab)
                else:
                    q = make_count(i % V, 1, K, vocab)
                instances.append((q, [1, 2], 12 + i, 900 + i))
            for q, history, S, seed in instances:
                a = importance_sampling(q, remote, history, S, seed=seed)
                b = importance_sampling(q, model.spawn(), history, S, seed=seed)
                assert abs(a.value - b.value) < 1e-9
                assert a.model_calls == b.model_calls
        finally:
            remote.close()

    def test_thousand_random_conditionals(self, parity_setup):
        model, model_file = parity_setup
        remote = spawn_stdio(model_file)
        try:
            gen = np.random.default_rng(3)
            V = model.vocab.size
            for _ in range(1000):
                history = [int(gen.integers(V)) for _ in range(int(gen.integers(1, 4)))]
                prefix = [int(gen.integers(V)) for _ in range(int(gen.integers(0, 3)))]
                a = remote.next(history, prefix).logp
                b = model.next(history, prefix).logp
                np.testing.assert_allclose(a, b, atol=1e-9, rtol=0)
        finally:
            remote.close()

    def test_crash_isolation(self, parity_setup):
        _, model_file = parity_setup
        remote = spawn_stdio(model_file)
        remote.next([0], [])
        remote.transport.proc.kill()
        remote.transport.proc.wait()
        with pytest.raises(RemoteModelUnavailable):
            remote.next([0], [1])
        remote.close()


@needs_server
class TestTcpParity:
    def test_round_trip_over_tcp(self, parity_setup):
        model, model_file = parity_setup
        proc = subprocess.Popen(
            ["node", str(SERVER_MAIN), "--model", str(model_file), "--transport", "tcp", "--port", "0"],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            line = proc.stderr.readline()
            match = re.match(r"LISTENING (\d+)", line)
            assert match, f"unexpected server banner: {line!r}"
            port = int(match.group(1))
            remote = RemoteModel(TcpTransport("127.0.0.1", port))
            q = make_hitting_time({0}, 3, Vocab(model.vocab.size))
            a = importance_sampling(q, remote, [1], 10, seed=4)
            b = importance_sampling(q, model.spawn(), [1], 10, seed=4)
            assert abs(a.value - b.value) < 1e-9
            remote.close()
        finally:
            proc.terminate()
            proc.wait(timeout=10)
