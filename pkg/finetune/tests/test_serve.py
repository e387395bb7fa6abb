import socket
import threading
import time

import pytest
import requests
import uvicorn

from diagtune import training as tr
from diagtune.serve import build_app

from simbench import corpus
from simbench.backend import RemoteBackend, chat_request
from simbench.structured import parse_structured


@pytest.fixture(scope="module")
def checkpoint(corpora, tmp_path_factory):
    pretrain_path, train_path, *_ = corpora
    spec = tr.toy_profile(pretrain_path=str(pretrain_path),
                          finetune_path=str(train_path),
                          epochs_pretrain=1, epochs_finetune=2,
                          output_dir=str(tmp_path_factory.mktemp("ckpt")),
                          seed=2)
    return tr.train(spec).checkpoint_path


@pytest.fixture(scope="module")
def endpoint(checkpoint):
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(build_app(checkpoint), host="127.0.0.1",
                            port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    for _ in range(100):
        try:
            if requests.get(f"{base}/health", timeout=1).status_code == 200:
                break
        except requests.RequestException:
            time.sleep(0.1)
    else:
        raise RuntimeError("server never came up")
    yield base
    server.should_exit = True
    thread.join(timeout=5)


def test_endpoint_answers_with_parseable_label(endpoint, corpora):
    *_, test_samples = corpora
    record = corpus.emit_finetune(test_samples[0])
    body = {
        "model": "diagtune",
        "messages": [
            {"role": "system", "content": record.system},
            {"role": "user",
             "content": record.instruction + "\n\n" + record.input},
        ],
        "temperature": 0,
    }
    reply = requests.post(f"{endpoint}/v1/chat/completions", json=body,
                          timeout=30).json()
    content = reply["choices"][0]["message"]["content"]
    label = parse_structured(content, "diagnosis")
    assert label.value in ("Inaccurate", "Incomplete",
                           "Inaccurate & Incomplete")
    assert reply["usage"]["completion_tokens"] > 0


def test_eval_diagnostic_smoke_over_served_endpoint(endpoint, corpora):
    *_, test_samples = corpora
    backend = RemoteBackend(endpoint, "diagtune", rate_per_s=1000,
                            max_attempts=2)
    subset = test_samples[:20]
    report = corpus.eval_diagnostic(backend, subset)
    # end-to-end smoke: every request answered with a parseable label
    assert report.failures == 0
    assert sum(report.confusion.values()) == len(subset)
    assert 0.0 <= report.accuracy <= 1.0


def test_primary_client_round_trip(endpoint):
    backend = RemoteBackend(endpoint, "diagtune", rate_per_s=1000)
    request = chat_request("You are an auditor.",
                           "User profile:\n- (negative) [Comedy] Averse to "
                           "Comedy content.\n\nItem:\nTitle: X\nGenres: "
                           "Comedy\n\nWhich defect?", hint="diagnosis")
    response = backend.complete(request)
    assert response.text.startswith("Label: ")
    assert response.token_counts is not None
