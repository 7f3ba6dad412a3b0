"""Validates CLI and HTTP output against data/schemas/biasscope-api.schema.json.

usage: check_schemas.py BIASSCOPE_BINARY PROJECT_DIR
"""

import json
import os
import signal
import subprocess
import sys
import urllib.error
import urllib.request

import jsonschema

cli, root = sys.argv[1], sys.argv[2]
data = os.path.join(root, "data")
fixtures = os.path.join(root, "tests", "fixtures")
lexicon = os.path.join(data, "mock_lexicon.txt")

with open(os.path.join(data, "schemas", "biasscope-api.schema.json")) as f:
    schema = json.load(f)
jsonschema.Draft202012Validator.check_schema(schema)

failures = []


def check(name, doc, definition, valid=True):
    wrapped = {"$defs": schema["$defs"], "$ref": "#/$defs/" + definition}
    errors = list(jsonschema.Draft202012Validator(wrapped).iter_errors(doc))
    if valid and errors:
        failures.append(f"{name}: {errors[0].message}")
    elif not valid and not errors:
        failures.append(f"{name}: invalid document was accepted")
    print(("ok   " if (not errors) == valid else "FAIL ") + name)


def run_json(*args):
    out = subprocess.run([cli, *args], check=True, capture_output=True, text=True, timeout=60)
    return json.loads(out.stdout)


text = "Those people are lazy. The report was published. She is so bossy!"
report = run_json("analyze", "--json", "--mock", lexicon, "--text", text)
check("cli analyze", report, "bias_report")
check("cli analyze (empty)", run_json("analyze", "--json", "--mock", lexicon, "--text", ""), "bias_report")
check("cli eval crows", run_json("eval", "crows", "--json", "--mock", lexicon, "--data",
                                 os.path.join(fixtures, "crows_3.csv")), "eval_crows")
check("cli eval babe", run_json("eval", "babe", "--json", "--mock", lexicon, "--threshold", "1", "--data",
                                os.path.join(fixtures, "babe_4.csv")), "eval_babe")
check("cli bench", run_json("bench", "--json", "--trials", "1", "--mock", lexicon), "eval_bench")

broken = json.loads(json.dumps(report))
broken["bias_ratio"] = 1.5
check("out-of-range ratio is rejected", broken, "bias_report", valid=False)
broken = json.loads(json.dumps(report))
broken["sentences"][0]["status"] = "maybe"
check("unknown status is rejected", broken, "bias_report", valid=False)

server = subprocess.Popen([cli, "serve", "--port", "0", "--mock", lexicon], stdout=subprocess.PIPE, text=True,
                          env={k: v for k, v in os.environ.items() if k not in ("PORT", "BIAS_DETECTOR_URL")})
try:
    banner = server.stdout.readline().strip()
    base = banner.rsplit(" ", 1)[-1]

    def call(path, body=None):
        req = urllib.request.Request(base + path, data=None if body is None else json.dumps(body).encode(),
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=10) as resp:
                return resp.status, resp.read().decode()
        except urllib.error.HTTPError as e:
            return e.code, e.read().decode()

    status, body = call("/health")
    check("GET /health", json.loads(body), "health")
    status, body = call("/api/models")
    models = json.loads(body)
    check("GET /api/models", models, "models_list")
    status, body = call("/api/analyze", {"text": text, "source": "response"})
    http_report = json.loads(body)
    check("POST /api/analyze", http_report, "bias_report")
    status, body = call("/api/analyze", {"text": 1})
    check("POST /api/analyze 400", json.loads(body), "error")
    request = {"model_a": models[0], "report_a": http_report, "model_b": models[0], "report_b": report}
    status, body = call("/api/compare", request)
    check("POST /api/compare", json.loads(body), "comparison_report")
    chat_request = {"model": models[0], "messages": [{"role": "user", "content": "Good morning to you."}]}
    check("chat request", chat_request, "chat_request")
    status, body = call("/api/chat", chat_request)
    events = [json.loads(line[len("data: "):]) for line in body.splitlines() if line.startswith("data: ")]
    for i, event in enumerate(events):
        check(f"SSE event {i}", event, "sse_event")
    session = {
        "column_a": {"model": models[0], "turns": [
            {"role": "user", "content": "Good morning to you.", "bias_report": http_report},
            {"role": "assistant", "content": events[-1]["full_text"], "model": models[0]}],
            "column_report": http_report},
        "column_b": {"model": models[0], "turns": []},
        "prompt_reports": [http_report],
        "comparison": json.loads(call("/api/compare", request)[1]),
    }
    check("session", session, "session")
    status, body = call("/api/export", session)
    check("POST /api/export", json.loads(body), "session_export")
    status, body = call("/api/chat", {"model": {"provider_id": "mock", "model_id": "nope"},
                                      "messages": [{"role": "user", "content": "x"}]})
    check("POST /api/chat 404", json.loads(body), "error")
finally:
    server.send_signal(signal.SIGTERM)
    server.wait(timeout=10)

if failures:
    print("\n".join(failures), file=sys.stderr)
    sys.exit(1)
