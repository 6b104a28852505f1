"""Autoregressive sampling policy over the token library.

A single-layer gated recurrent cell reads, at every position, the one-hot
encoded parent and elder-sibling tokens of the slot being filled and emits
logits over the library.  Inadmissible tokens (see grammar) get their
logits masked to -inf before the softmax, so masked tokens have exactly
zero probability and the rest renormalize.

Gradients of sequence log-probabilities are computed by hand with
backpropagation through time; they are exact, which the tests verify
against central finite differences.

Checkpoint container (little-endian throughout):

    magic   4 bytes  b"SYMC"
    u32     format version (1)
    u32     hidden size
    u32     library size
    u32     number of tensors
    per tensor: u16 name length, name (utf-8), u8 ndim, ndim * u32 dims,
                float64 data in C order
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ZeroProbability
from .expr import Library
from .grammar import EMPTY, GrammarConfig, PartialTree, masked_steps

PARAM_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h", "W_o", "b_o")

_MAGIC = b"SYMC"
_VERSION = 1


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class PolicyNet:
    """GRU parameters bound to one token library."""

    def __init__(self, library: Library, hidden_size: int = 32, rng=None, init_scale: float = 0.1):
        self.library = library
        self.hidden_size = int(hidden_size)
        self.library_size = len(library)
        self.input_size = 2 * (self.library_size + 1)  # parent + sibling one-hots
        h, d, L = self.hidden_size, self.input_size, self.library_size
        if rng is None:
            self.params = {}
            for name in PARAM_NAMES:
                self.params[name] = np.zeros(self._shape(name), dtype=np.float64)
        else:
            self.params = {
                name: rng.normal(0.0, init_scale, size=self._shape(name))
                for name in PARAM_NAMES
            }
        assert self.params["W_z"].shape == (h, d)
        assert self.params["W_o"].shape == (L, h)

    def _shape(self, name):
        h, d, L = self.hidden_size, self.input_size, self.library_size
        if name.startswith("W_o"):
            return (L, h)
        if name == "b_o":
            return (L,)
        if name.startswith("b"):
            return (h,)
        if name.startswith("U"):
            return (h, h)
        return (h, d)

    def zero_hidden(self) -> np.ndarray:
        return np.zeros(self.hidden_size, dtype=np.float64)

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def encode(self, obs: tuple[int, int]) -> np.ndarray:
        """Concatenated one-hot of (parent, sibling) over library + EMPTY."""
        L = self.library_size
        x = np.zeros(self.input_size, dtype=np.float64)
        parent, sibling = obs
        x[L if parent == EMPTY else parent] = 1.0
        x[L + 1 + (L if sibling == EMPTY else sibling)] = 1.0
        return x


def policy_step(net: PolicyNet, obs: tuple[int, int], hidden: np.ndarray | None):
    """One recurrent step: returns (logits over library, next hidden state)."""
    h = net.zero_hidden() if hidden is None else hidden
    x = net.encode(obs)
    logits, h_new, _ = _step_cached(net, x, h)
    return logits, h_new


def _step_cached(net, x, h):
    p = net.params
    z = _sigmoid(p["W_z"] @ x + p["U_z"] @ h + p["b_z"])
    r = _sigmoid(p["W_r"] @ x + p["U_r"] @ h + p["b_r"])
    hc = np.tanh(p["W_h"] @ x + p["U_h"] @ (r * h) + p["b_h"])
    h_new = (1.0 - z) * h + z * hc
    logits = p["W_o"] @ h_new + p["b_o"]
    cache = (x, h, z, r, hc, h_new)
    return logits, h_new, cache


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities with masked entries at -inf; allowed entries sum to 1."""
    shifted = np.where(mask, logits, -np.inf)
    m = shifted.max()
    expd = np.exp(shifted - m)
    return shifted - m - np.log(expd.sum())


@dataclass
class SampleBatch:
    """Sequences emitted by the policy with their replayable step records."""

    sequences: list[list[int]]
    log_probs: np.ndarray
    masks: list[list[np.ndarray]]

    def __len__(self) -> int:
        return len(self.sequences)


def sample_batch(net: PolicyNet, n: int, rng, cfg: GrammarConfig) -> SampleBatch:
    """Sample n constraint-satisfying sequences from the masked policy."""
    sequences, log_probs, all_masks = [], [], []
    for _ in range(n):
        state = PartialTree(net.library, cfg)
        h = net.zero_hidden()
        lp = 0.0
        seq, masks = [], []
        while not state.done:
            obs = state.observation()
            mask = state.constraint_mask()
            logits, h, _ = _step_cached(net, net.encode(obs), h)
            logp = masked_log_softmax(logits, mask)
            probs = np.exp(logp)
            probs[~mask] = 0.0
            probs /= probs.sum()
            tid = int(rng.choice(len(probs), p=probs))
            lp += logp[tid]
            seq.append(tid)
            masks.append(mask)
            state.push(tid)
        sequences.append(seq)
        log_probs.append(lp)
        all_masks.append(masks)
    return SampleBatch(sequences, np.array(log_probs), all_masks)


def log_prob(net: PolicyNet, seq, cfg: GrammarConfig) -> float:
    """Sum of per-step masked log-probabilities of the given sequence.

    Raises ZeroProbability if the sequence is unreachable under the grammar.
    """
    h = net.zero_hidden()
    lp = 0.0
    for obs, mask, tid in masked_steps(seq, net.library, cfg):
        logits, h, _ = _step_cached(net, net.encode(obs), h)
        lp += masked_log_softmax(logits, mask)[tid]
    return float(lp)


def grad_log_prob(net: PolicyNet, seq, cfg: GrammarConfig) -> dict:
    """Exact gradient of log_prob(seq) w.r.t. every parameter (BPTT)."""
    steps = list(masked_steps(seq, net.library, cfg))
    h = net.zero_hidden()
    caches = []
    for obs, mask, tid in steps:
        x = net.encode(obs)
        logits, h, cache = _step_cached(net, x, h)
        logp = masked_log_softmax(logits, mask)
        probs = np.exp(logp)
        probs[~mask] = 0.0
        caches.append((cache, probs, tid))

    g = net.zero_grads()
    p = net.params
    dh_next = np.zeros(net.hidden_size)
    for (x, h_prev, z, r, hc, h_new), probs, tid in reversed(caches):
        dlogits = -probs
        dlogits[tid] += 1.0
        g["W_o"] += np.outer(dlogits, h_new)
        g["b_o"] += dlogits
        dh = p["W_o"].T @ dlogits + dh_next

        dz = dh * (hc - h_prev)
        dhc = dh * z
        dh_prev = dh * (1.0 - z)

        dah = dhc * (1.0 - hc * hc)
        g["W_h"] += np.outer(dah, x)
        g["U_h"] += np.outer(dah, r * h_prev)
        g["b_h"] += dah
        drh = p["U_h"].T @ dah
        dh_prev += drh * r
        dr = drh * h_prev

        daz = dz * z * (1.0 - z)
        g["W_z"] += np.outer(daz, x)
        g["U_z"] += np.outer(daz, h_prev)
        g["b_z"] += daz
        dh_prev += p["U_z"].T @ daz

        dar = dr * r * (1.0 - r)
        g["W_r"] += np.outer(dar, x)
        g["U_r"] += np.outer(dar, h_prev)
        g["b_r"] += dar
        dh_prev += p["U_r"].T @ dar

        dh_next = dh_prev
    return g


def gradient_step(net: PolicyNet, grads: dict, lr: float, clip_norm: float = 5.0) -> None:
    """In-place gradient *ascent* with global-norm clipping."""
    total = np.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
    scale = lr if total <= clip_norm else lr * clip_norm / total
    for name, g in grads.items():
        net.params[name] += scale * g


def first_step_probs(net: PolicyNet, cfg: GrammarConfig) -> np.ndarray:
    """Masked softmax the policy assigns to the first token of a fresh tree."""
    state = PartialTree(net.library, cfg)
    mask = state.constraint_mask()
    logits, _ = policy_step(net, state.observation(), None)
    probs = np.exp(masked_log_softmax(logits, mask))
    probs[~mask] = 0.0
    return probs / probs.sum()


def save_checkpoint(net: PolicyNet, path) -> None:
    """Write parameters in the documented binary container."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", _VERSION, net.hidden_size, net.library_size,
                             len(net.params)))
        for name in PARAM_NAMES:
            arr = np.ascontiguousarray(net.params[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path, library: Library) -> PolicyNet:
    """Read a checkpoint written by save_checkpoint."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a policy checkpoint")
        version, hidden, lib_size, n_tensors = struct.unpack("<IIII", fh.read(16))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        if lib_size != len(library):
            raise ValueError(
                f"checkpoint was trained on a {lib_size}-token library, got {len(library)}"
            )
        net = PolicyNet(library, hidden_size=hidden)
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            net.params[name] = data.astype(np.float64).copy()
    return net
