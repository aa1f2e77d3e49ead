import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from convseg.model import ValidationError
from convseg.providers import (
    EmbeddingFile,
    FileEmbeddingProvider,
    ServiceConfig,
    ServiceEmbeddingProvider,
    ServiceError,
    embed_texts,
    load_call_embeddings,
    load_embedding_file,
    save_call_embeddings,
    save_embedding_file,
    service_config_from_env,
)


class TestEmbeddingFile:
    def test_roundtrip(self, tmp_path):
        store = EmbeddingFile(dim=2, entries=(("hi", (0.0, 1.0)), ("bye", (1.0, 0.5))))
        path = tmp_path / "store.json"
        save_embedding_file(store, path)
        assert load_embedding_file(path) == store

    def test_inconsistent_dims(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "dim": 3,
            "entries": [{"text": "a", "vector": [1, 0, 0]},
                        {"text": "b", "vector": [1, 0, 0, 0]}],
        }))
        with pytest.raises(ValidationError, match="dimension"):
            load_embedding_file(path)

    def test_duplicate_keys(self):
        with pytest.raises(ValidationError, match="duplicate"):
            EmbeddingFile(dim=1, entries=(("a", (1.0,)), ("a ", (2.0,))))

    def test_empty_store_valid(self, tmp_path):
        store = EmbeddingFile(dim=4, entries=())
        path = tmp_path / "empty.json"
        save_embedding_file(store, path)
        assert load_embedding_file(path).entries == ()

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "garbage.json"
        path.write_text("{not json")
        with pytest.raises(json.JSONDecodeError):
            load_embedding_file(path)


class TestFileProvider:
    def test_lookup_roundtrip(self):
        provider = FileEmbeddingProvider(EmbeddingFile(dim=2, entries=(("hi", (0.0, 1.0)),)))
        out = embed_texts(["hi"], provider)
        np.testing.assert_allclose(out[0], [0.0, 1.0])

    def test_missing_key_names_text(self):
        provider = FileEmbeddingProvider(EmbeddingFile(dim=2, entries=(("hi", (0.0, 1.0)),)))
        with pytest.raises(ValidationError, match="bye"):
            embed_texts(["bye"], provider)

    def test_normalization(self):
        provider = FileEmbeddingProvider(EmbeddingFile(dim=2, entries=(("v", (3.0, 4.0)),)))
        np.testing.assert_allclose(provider.embed(["v"])[0], [0.6, 0.8])

    def test_trailing_whitespace_trimmed(self):
        provider = FileEmbeddingProvider(EmbeddingFile(dim=1, entries=(("hi", (2.0,)),)))
        np.testing.assert_allclose(provider.embed(["hi   \n"])[0], [1.0])

    def test_order_preserved_on_shuffled_batches(self):
        rng = np.random.default_rng(3)
        texts = [f"text-{i}" for i in range(20)]
        one_hot = np.eye(20)
        entries = tuple((t, tuple(one_hot[i])) for i, t in enumerate(texts))
        provider = FileEmbeddingProvider(EmbeddingFile(dim=20, entries=entries))
        order = rng.permutation(len(texts))
        shuffled = [texts[i] for i in order]
        out = provider.embed(shuffled)
        for pos, vec in zip(order, out):
            np.testing.assert_array_equal(vec, one_hot[pos])
        again = provider.embed(shuffled)
        for a, b in zip(out, again):
            assert np.array_equal(a, b)  # bit-identical re-embedding

    def test_empty_text_list(self):
        provider = FileEmbeddingProvider(EmbeddingFile(dim=2, entries=()))
        with pytest.raises(ValidationError):
            embed_texts([], provider)


class _Handler(BaseHTTPRequestHandler):
    server_version = "stub"

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.requests.append({
            "path": self.path,
            "texts": body["texts"],
            "auth": self.headers.get("Authorization"),
        })
        script = self.server.script
        action = script.pop(0) if script else "ok"
        if action == "error":
            self.send_response(500)
            self.end_headers()
            return
        if action == "garbage":
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(b'{"unexpected": true}')
            return
        vectors = [[3.0, 4.0] for _ in body["texts"]]
        payload = json.dumps({"dim": 2, "vectors": vectors}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def embed_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    server.requests = []
    server.script = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


def _config(server, **kwargs):
    defaults = dict(endpoint=f"http://127.0.0.1:{server.server_address[1]}",
                    batch_size=2, timeout=5.0, retries=2, backoff=0.0)
    defaults.update(kwargs)
    return ServiceConfig(**defaults)


class TestServiceProvider:
    def test_normalizes_and_batches(self, embed_server):
        provider = ServiceEmbeddingProvider(_config(embed_server))
        out = provider.embed(["a", "b", "c"])
        assert len(out) == 3
        np.testing.assert_allclose(out[0], [0.6, 0.8])
        batches = [r["texts"] for r in embed_server.requests]
        assert batches == [["a", "b"], ["c"]]
        assert all(r["path"] == "/embed" for r in embed_server.requests)

    def test_bearer_token_sent(self, embed_server):
        provider = ServiceEmbeddingProvider(_config(embed_server, token="sekrit"))
        provider.embed(["a"])
        assert embed_server.requests[0]["auth"] == "Bearer sekrit"

    def test_retries_transient_500(self, embed_server):
        embed_server.script[:] = ["error", "error", "ok"]
        provider = ServiceEmbeddingProvider(_config(embed_server))
        out = provider.embed(["a"])
        assert len(out) == 1
        assert len(embed_server.requests) == 3

    def test_gives_up_after_retries(self, embed_server):
        embed_server.script[:] = ["error"] * 3
        provider = ServiceEmbeddingProvider(_config(embed_server))
        with pytest.raises(ServiceError, match="unreachable"):
            provider.embed(["a"])

    def test_malformed_response(self, embed_server):
        embed_server.script[:] = ["garbage"]
        provider = ServiceEmbeddingProvider(_config(embed_server))
        with pytest.raises(ServiceError, match="malformed"):
            provider.embed(["a"])

    def test_connection_refused(self):
        config = ServiceConfig(endpoint="http://127.0.0.1:9", retries=1, backoff=0.0,
                               timeout=0.5)
        with pytest.raises(ServiceError, match="unreachable"):
            ServiceEmbeddingProvider(config).embed(["a"])

    def test_dim_mismatch(self, embed_server):
        provider = ServiceEmbeddingProvider(_config(embed_server, dim=7))
        with pytest.raises(ServiceError, match="dim"):
            provider.embed(["a"])

    def test_config_from_env(self, monkeypatch):
        monkeypatch.setenv("CONVSEG_EMBED_URL", "http://example.test")
        monkeypatch.setenv("CONVSEG_EMBED_TOKEN", "tok")
        cfg = service_config_from_env()
        assert cfg.endpoint == "http://example.test"
        assert cfg.token == "tok"
        monkeypatch.delenv("CONVSEG_EMBED_URL")
        with pytest.raises(ValidationError):
            service_config_from_env()


class TestSidecar:
    def test_roundtrip(self, tmp_path):
        vectors = np.array([[1.0, 0.0], [0.5, 0.5]])
        path = tmp_path / "emb.json"
        save_call_embeddings("call-1", vectors, path)
        call_id, loaded = load_call_embeddings(path)
        assert call_id == "call-1"
        np.testing.assert_array_equal(loaded, vectors)

    def test_shape_mismatch(self, tmp_path):
        path = tmp_path / "emb.json"
        path.write_text(json.dumps({"call_id": "c", "dim": 3, "vectors": [[1.0, 2.0]]}))
        with pytest.raises(ValidationError, match="shape"):
            load_call_embeddings(path)
