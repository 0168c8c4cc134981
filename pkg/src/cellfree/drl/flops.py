"""Inference cost of the policy networks."""

from .nets import HIDDEN


def layer_flops(dims):
    """``sum 2 * I * O`` over the fully connected layers of ``dims``."""
    return sum(2 * i * o for i, o in zip(dims[:-1], dims[1:]))


def flops_estimate(state_dim, action_dim, hidden=HIDDEN):
    """FLOPs of one forward pass through ``[S, *hidden, A]``.

    With the default widths this is ``2 (256 S + 128 A + 32768)``.
    """
    if state_dim < 0 or action_dim < 0:
        raise ValueError("dimensions must be >= 0")
    return layer_flops((state_dim, *hidden, action_dim))


def table_flops(state_dim, action_dim=1, networks=1):
    """The tabulated form ``32768 + 256 K + 128 |A|`` (times the network count).

    ``K`` is the state width; actor-critic agents run two networks.
    """
    if state_dim < 0 or action_dim < 0 or networks < 1:
        raise ValueError("dimensions must be >= 0 and networks >= 1")
    return networks * (32768 + 256 * state_dim + 128 * action_dim)


def flops_report(state_dim, action_dim=1):
    """Both counts side by side; they differ by the factor of two on every term."""
    full = flops_estimate(state_dim, action_dim)
    table = table_flops(state_dim, action_dim)
    return {"state_dim": state_dim, "action_dim": action_dim,
            "layer_sum": full, "table_form": table, "ratio": full / table}
