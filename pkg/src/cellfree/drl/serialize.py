"""Save and reload trained agents for inference.

An agent file is an uncompressed ``.npz`` archive holding:

* ``__meta__`` - a JSON string with ``format``, ``tag``, ``discrete``,
  ``state_dim``, ``action_dim``, ``steps``, ``config`` and, per network,
  its layer widths;
* ``<network>.<i>`` - the ``i``-th parameter array of each network
  (weights and biases alternate, input layer first).

Optimizer moments and replay contents are not stored.
"""

import json

import numpy as np

from .agents import AgentConfig, make_agent

FORMAT = "cellfree-agent-v1"


def save_agent(agent, path):
    nets = agent.networks()
    meta = {
        "format": FORMAT,
        "tag": agent.tag,
        "discrete": agent.discrete,
        "state_dim": agent.state_dim,
        "action_dim": agent.action_dim,
        "steps": agent.steps,
        "config": agent.config.to_dict(),
        "networks": {name: list(net.dims) for name, net in nets.items()},
    }
    arrays = {f"{name}.{i}": p for name, net in nets.items() for i, p in enumerate(net.params)}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_agent(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path}: not a {FORMAT} file")
        cfg = meta["config"]
        cfg["hidden"] = tuple(cfg["hidden"])
        agent = make_agent(meta["tag"], meta["state_dim"], meta["action_dim"],
                           discrete=meta["discrete"], config=AgentConfig(**cfg))
        for name, net in agent.networks().items():
            if list(net.dims) != meta["networks"][name]:
                raise ValueError(f"{path}: network {name} has dims {meta['networks'][name]}")
            for i, p in enumerate(net.params):
                p[...] = data[f"{name}.{i}"]
        agent.steps = meta["steps"]
    return agent
