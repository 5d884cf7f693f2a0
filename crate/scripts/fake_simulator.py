#!/usr/bin/env python3
"""Stand-in simulator speaking the external-process protocol.

Reads {"design": [...], "fidelity": [...], "seed": n} on stdin and answers on
stdout. The first argument selects the behaviour:

    ok       quadratic objective with a fidelity bias, cost 1 + sum(fidelity)
    nocost   as ok but without cost_seconds
    error    {"error": ...} with a cost
    garbage  non-JSON output
    extra    a response with an unknown key
    crash    exit status 1 with a message on stderr
    sleep    sleep for the number of seconds given as the second argument
    track    as ok, but record concurrency in the directory given as the second argument
"""

import json
import os
import sys
import time


def objective(req):
    x = req["design"]
    z = req["fidelity"]
    y = -sum((v - 0.3) ** 2 for v in x)
    y -= 0.1 * sum(1.0 - v for v in z)
    return y


def main():
    mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
    req = json.loads(sys.stdin.read())
    cost = 1.0 + sum(req["fidelity"])
    if mode == "ok":
        print(json.dumps({"objective": objective(req), "cost_seconds": cost}))
    elif mode == "nocost":
        print(json.dumps({"objective": objective(req)}))
    elif mode == "error":
        print(json.dumps({"error": "solver diverged", "cost_seconds": 2.5}))
    elif mode == "garbage":
        print("Segmentation fault (core dumped)")
    elif mode == "extra":
        print(json.dumps({"objective": 1.0, "residual": 0.1}))
    elif mode == "crash":
        sys.stderr.write("mesh generation failed\n")
        sys.exit(1)
    elif mode == "sleep":
        time.sleep(float(sys.argv[2]))
        print(json.dumps({"objective": 0.0}))
    elif mode == "track":
        root = sys.argv[2]
        marker = os.path.join(root, "running-%d" % os.getpid())
        open(marker, "w").close()
        running = len([n for n in os.listdir(root) if n.startswith("running-")])
        with open(os.path.join(root, "peaks"), "a") as f:
            f.write("%d\n" % running)
        time.sleep(0.15)
        os.remove(marker)
        print(json.dumps({"objective": objective(req), "cost_seconds": cost}))
    else:
        sys.stderr.write("unknown mode %s\n" % mode)
        sys.exit(2)


if __name__ == "__main__":
    main()
