"""Minimal frame-protocol worker used by the integration tests.

Usage: worker.py <source.py> <entrypoint>
"""
import json
import sys


def decode(j):
    if isinstance(j, list):
        return [decode(x) for x in j]
    if isinstance(j, dict):
        (tag, body), = j.items()
        if tag == "none":
            return None
        if tag == "tuple":
            return tuple(decode(x) for x in body)
        if tag == "map":
            return {k: decode(v) for k, v in body.items()}
        if tag == "set":
            return frozenset(decode(x) for x in body["values"])
        raise ValueError(tag)
    return j


def encode(v):
    if v is None:
        return {"none": True}
    if isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, list):
        return [encode(x) for x in v]
    if isinstance(v, tuple):
        return {"tuple": [encode(x) for x in v]}
    if isinstance(v, dict):
        return {"map": {k: encode(x) for k, x in v.items()}}
    if isinstance(v, (set, frozenset)):
        return {"set": {"kind": "full", "values": [encode(x) for x in v]}}
    raise TypeError(type(v).__name__)


def main():
    source, entry = sys.argv[1], sys.argv[2]
    scope = {}
    with open(source) as f:
        exec(compile(f.read(), source, "exec"), scope)
    fn = scope[entry]
    for line in sys.stdin:
        req = json.loads(line)
        args = [decode(a) for a in req["args"]]
        try:
            resp = {"id": req["id"], "status": "ok", "value": encode(fn(*args))}
        except ValueError as e:
            resp = {"id": req["id"], "status": "invalid-input", "message": str(e)}
        except Exception as e:
            resp = {"id": req["id"], "status": "error", "message": repr(e)}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
