"""Word-level LSTM language model.

Embedding -> stacked LSTM layers -> projection to vocabulary logits, trained
by truncated backpropagation through time with Adam and global-norm gradient
clipping.  Everything is float64 and deterministic for a fixed seed: training
shuffles email order once per epoch with a seed derived from (seed, epoch),
so a run interrupted at any epoch boundary and resumed from a checkpoint
reproduces the uninterrupted loss trace bit for bit.

The forward/backward passes are written out longhand (they are the point of
this package); only the array arithmetic is delegated to numpy.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import PreprocessedEmail, TrainingMix, Vocabulary
from .errors import CheckpointError, InputError
from .numerics import (
    AdamState,
    Params,
    RngStream,
    adam_step,
    clip_global_norm,
    derive_seed,
    row_softmax,
    sigmoid,
    tanh,
)

GATES = ("i", "f", "o", "g")

CHECKPOINT_MAGIC = b"MMF1"
CHECKPOINT_VERSION = 1

# (hidden, epochs) presets: "paper" is the full-scale configuration, "desk"
# trains a small model in minutes on one core for tests and demos.
PROFILES = {"paper": (512, 100), "desk": (64, 30)}


@dataclass
class LmConfig:
    layers: int = 2
    hidden: int = 512
    embed_dim: int = 128
    seq_len: int = 20
    batch_size: int = 10
    epochs: int = 100
    lr: float = 2e-3
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("layers", "hidden", "embed_dim", "seq_len", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive, got {getattr(self, name)}")
        if self.seq_len < 2:
            raise InputError(f"seq_len must be >= 2, got {self.seq_len}")
        if self.lr <= 0:
            raise InputError(f"lr must be positive, got {self.lr}")
        if self.clip_norm <= 0:
            raise InputError(f"clip_norm must be positive, got {self.clip_norm}")


# LSTM state: one (h, c) pair per layer, each [batch, hidden].
State = list[tuple[np.ndarray, np.ndarray]]


def zero_state(config: LmConfig, batch_size: int) -> State:
    return [
        (np.zeros((batch_size, config.hidden)), np.zeros((batch_size, config.hidden)))
        for _ in range(config.layers)
    ]


def init_params(config: LmConfig, vocab: Vocabulary, rng: RngStream) -> Params:
    """Xavier-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases except
    the forget gate at 1.0 so early training does not immediately forget."""
    v, e, h = vocab.size, config.embed_dim, config.hidden

    def xavier(rows: int, cols: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (rows + cols))
        u = rng.uniform_array(rows * cols)
        return ((2.0 * u - 1.0) * limit).reshape(rows, cols)

    params: Params = {"embedding": xavier(v, e)}
    for layer in range(config.layers):
        in_dim = e if layer == 0 else h
        for g in GATES:
            params[f"l{layer}_W{g}"] = xavier(in_dim, h)
        for g in GATES:
            params[f"l{layer}_U{g}"] = xavier(h, h)
        for g in GATES:
            params[f"l{layer}_b{g}"] = np.full(h, 1.0) if g == "f" else np.zeros(h)
    params["proj_W"] = xavier(h, v)
    params["proj_b"] = np.zeros(v)
    return params


def _promote(tokens) -> tuple[np.ndarray, bool]:
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"token array must be 1-d or 2-d, got shape {arr.shape}")


def forward(params: Params, config: LmConfig, tokens, state: State | None = None):
    """Run the network over a [batch, time] (or 1-d) index array.

    Returns (logits, final_state, cache): logits [batch, time, vocab]
    (squeezed to [time, vocab] for 1-d input), the per-layer (h, c) after the
    last step, and the cache of intermediates that `backward` consumes.
    """
    tokens, squeezed = _promote(tokens)
    bsz, steps = tokens.shape
    vocab_size = params["embedding"].shape[0]
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab_size):
        raise IndexError(f"token index out of range for vocabulary of {vocab_size}")
    if state is None:
        state = zero_state(config, bsz)
    h = [hs.copy() for hs, _ in state]
    c = [cs.copy() for _, cs in state]

    x = params["embedding"][tokens]  # [B, T, E]
    # Per-step, per-layer intermediates for backward.
    steps_cache: list[list[dict]] = []
    h_top = np.empty((bsz, steps, config.hidden))
    for t in range(steps):
        inp = x[:, t, :]
        layer_caches = []
        for layer in range(config.layers):
            wi, wf = params[f"l{layer}_Wi"], params[f"l{layer}_Wf"]
            wo, wg = params[f"l{layer}_Wo"], params[f"l{layer}_Wg"]
            ui, uf = params[f"l{layer}_Ui"], params[f"l{layer}_Uf"]
            uo, ug = params[f"l{layer}_Uo"], params[f"l{layer}_Ug"]
            h_prev, c_prev = h[layer], c[layer]
            gi = sigmoid(inp @ wi + h_prev @ ui + params[f"l{layer}_bi"])
            gf = sigmoid(inp @ wf + h_prev @ uf + params[f"l{layer}_bf"])
            go = sigmoid(inp @ wo + h_prev @ uo + params[f"l{layer}_bo"])
            gg = tanh(inp @ wg + h_prev @ ug + params[f"l{layer}_bg"])
            c_new = gf * c_prev + gi * gg
            tanh_c = np.tanh(c_new)
            h_new = go * tanh_c
            layer_caches.append(
                {
                    "inp": inp,
                    "h_prev": h_prev,
                    "c_prev": c_prev,
                    "i": gi,
                    "f": gf,
                    "o": go,
                    "g": gg,
                    "tanh_c": tanh_c,
                }
            )
            h[layer], c[layer] = h_new, c_new
            inp = h_new
        steps_cache.append(layer_caches)
        h_top[:, t, :] = h[-1]

    logits = h_top @ params["proj_W"] + params["proj_b"]
    cache = {
        "tokens": tokens,
        "steps": steps_cache,
        "h_top": h_top,
        "logits": logits,
        "params": params,
        "config": config,
    }
    final_state = [(h[layer], c[layer]) for layer in range(config.layers)]
    return (logits[0] if squeezed else logits), final_state, cache


def loss(logits, targets) -> float:
    """Mean cross-entropy: −ln softmax(logits)[target], averaged over positions."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    flat = logits.reshape(-1, logits.shape[-1])
    tgt = targets.reshape(-1)
    if flat.shape[0] != tgt.shape[0]:
        raise ValueError(f"{flat.shape[0]} logit rows vs {tgt.shape[0]} targets")
    m = flat.max(axis=1)
    lse = m + np.log(np.exp(flat - m[:, None]).sum(axis=1))
    return float((lse - flat[np.arange(flat.shape[0]), tgt]).mean())


def backward(cache: dict, targets) -> Params:
    """Gradients of `loss` w.r.t. every parameter, truncated at the window
    boundary (the initial state is treated as a constant)."""
    params: Params = cache["params"]
    config: LmConfig = cache["config"]
    tokens: np.ndarray = cache["tokens"]
    bsz, steps = tokens.shape
    targets, _ = _promote(targets)
    if targets.shape != tokens.shape:
        raise ValueError(f"targets shape {targets.shape} does not match inputs {tokens.shape}")

    total = bsz * steps
    probs = row_softmax(cache["logits"])  # [B, T, V]
    dlogits = probs
    dlogits[
        np.repeat(np.arange(bsz), steps),
        np.tile(np.arange(steps), bsz),
        targets.reshape(-1),
    ] -= 1.0
    dlogits /= total

    grads: Params = {k: np.zeros_like(v) for k, v in params.items()}
    h_top = cache["h_top"]
    grads["proj_W"] += h_top.reshape(total, -1).T @ dlogits.reshape(total, -1)
    grads["proj_b"] += dlogits.reshape(total, -1).sum(axis=0)

    # dh flowing into the top layer from the projection, per step.
    proj_w_t = params["proj_W"].T
    dh_above = [dlogits[:, t, :] @ proj_w_t for t in range(steps)]

    for layer in range(config.layers - 1, -1, -1):
        wi, wf = params[f"l{layer}_Wi"], params[f"l{layer}_Wf"]
        wo, wg = params[f"l{layer}_Wo"], params[f"l{layer}_Wg"]
        ui, uf = params[f"l{layer}_Ui"], params[f"l{layer}_Uf"]
        uo, ug = params[f"l{layer}_Uo"], params[f"l{layer}_Ug"]
        dh_next = np.zeros((bsz, config.hidden))
        dc_next = np.zeros((bsz, config.hidden))
        dx_below = []
        for t in range(steps - 1, -1, -1):
            cc = cache["steps"][t][layer]
            gi, gf, go, gg = cc["i"], cc["f"], cc["o"], cc["g"]
            tanh_c = cc["tanh_c"]
            dh = dh_above[t] + dh_next
            dc = dh * go * (1.0 - tanh_c * tanh_c) + dc_next
            d_o = dh * tanh_c * go * (1.0 - go)
            d_f = dc * cc["c_prev"] * gf * (1.0 - gf)
            d_i = dc * gg * gi * (1.0 - gi)
            d_g = dc * gi * (1.0 - gg * gg)
            inp, h_prev = cc["inp"], cc["h_prev"]
            grads[f"l{layer}_Wi"] += inp.T @ d_i
            grads[f"l{layer}_Wf"] += inp.T @ d_f
            grads[f"l{layer}_Wo"] += inp.T @ d_o
            grads[f"l{layer}_Wg"] += inp.T @ d_g
            grads[f"l{layer}_Ui"] += h_prev.T @ d_i
            grads[f"l{layer}_Uf"] += h_prev.T @ d_f
            grads[f"l{layer}_Uo"] += h_prev.T @ d_o
            grads[f"l{layer}_Ug"] += h_prev.T @ d_g
            grads[f"l{layer}_bi"] += d_i.sum(axis=0)
            grads[f"l{layer}_bf"] += d_f.sum(axis=0)
            grads[f"l{layer}_bo"] += d_o.sum(axis=0)
            grads[f"l{layer}_bg"] += d_g.sum(axis=0)
            dx = d_i @ wi.T + d_f @ wf.T + d_o @ wo.T + d_g @ wg.T
            dh_next = d_i @ ui.T + d_f @ uf.T + d_o @ uo.T + d_g @ ug.T
            dc_next = dc * gf
            dx_below.append(dx)
        dh_above = list(reversed(dx_below))

    demb = grads["embedding"]
    for t in range(steps):
        np.add.at(demb, tokens[:, t], dh_above[t])
    return grads


@dataclass
class TrainResult:
    params: Params
    loss_trace: list[float]
    adam: AdamState


def _epoch_stream(
    encoded: list[list[int]], seed: int, epoch: int
) -> np.ndarray:
    rng = RngStream(derive_seed(seed, "epoch", epoch))
    order = list(range(len(encoded)))
    rng.shuffle(order)
    return np.asarray([tok for idx in order for tok in encoded[idx]], dtype=np.int64)


def _cut_windows(stream: np.ndarray, bsz: int, seq_len: int):
    """Reshape the token stream into `bsz` contiguous row segments and yield
    consecutive non-overlapping [bsz, seq_len] input/target windows, so
    carrying LSTM state across windows follows the actual text."""
    usable = stream.size - 1
    seg = usable // bsz
    n_windows = seg // seq_len
    if n_windows == 0:
        raise InputError(
            f"training stream of {stream.size} tokens is too short for "
            f"batch_size {bsz} x seq_len {seq_len}"
        )
    inputs = np.stack([stream[b * seg : b * seg + seg] for b in range(bsz)])
    targets = np.stack([stream[b * seg + 1 : b * seg + seg + 1] for b in range(bsz)])
    for w in range(n_windows):
        sl = slice(w * seq_len, (w + 1) * seq_len)
        yield inputs[:, sl], targets[:, sl]


def train(
    emails: list[PreprocessedEmail],
    mix: TrainingMix,
    vocab: Vocabulary,
    config: LmConfig,
    params: Params | None = None,
    adam: AdamState | None = None,
    start_epoch: int = 0,
    on_epoch=None,
) -> TrainResult:
    """Train on the mix-selected emails, one <EOS>-terminated token stream per
    epoch (email order reshuffled each epoch from the config seed).

    Pass `params`/`adam`/`start_epoch` from a loaded checkpoint to resume; the
    result's loss_trace then covers only the epochs run here.  `on_epoch`, if
    given, is called with (epoch_index, mean_loss) after each epoch.
    """
    by_id = {em.record_id: em for em in emails}
    selected = []
    for rid in list(mix.legit_ids) + list(mix.phish_ids):
        if rid not in by_id:
            raise InputError(f"mix references unknown email id {rid!r}")
        selected.append(by_id[rid])
    if not selected:
        raise InputError("training mix selects no emails")
    eos = vocab.eos_index
    encoded = [vocab.encode(em.tokens) + [eos] for em in selected]
    if sum(len(e) for e in encoded) < config.seq_len + 1:
        raise InputError(f"training stream is shorter than seq_len+1 = {config.seq_len + 1}")

    if params is None:
        params = init_params(config, vocab, RngStream(derive_seed(config.seed, "init", 0)))
    if adam is None:
        adam = AdamState.init_like(params)

    trace: list[float] = []
    for epoch in range(start_epoch, config.epochs):
        stream = _epoch_stream(encoded, config.seed, epoch)
        state = zero_state(config, config.batch_size)
        window_losses = []
        for inputs, targets in _cut_windows(stream, config.batch_size, config.seq_len):
            logits, state, cache = forward(params, config, inputs, state)
            window_losses.append(loss(logits, targets))
            grads = backward(cache, targets)
            clip_global_norm(grads, config.clip_norm)
            adam_step(params, grads, adam, config.lr)
        epoch_loss = float(np.mean(window_losses))
        trace.append(epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)
    return TrainResult(params, trace, adam)


def perplexity(params: Params, config: LmConfig, stream) -> float:
    """exp(mean cross-entropy) of the model over a held-out token stream."""
    stream = np.asarray(stream, dtype=np.int64)
    if stream.ndim != 1 or stream.size < 2:
        raise InputError("perplexity needs a flat stream of at least 2 tokens")
    state = zero_state(config, 1)
    total_nll = 0.0
    n = stream.size - 1
    for start in range(0, n, config.seq_len):
        chunk = stream[start : min(start + config.seq_len, n)]
        tgt = stream[start + 1 : start + 1 + chunk.size]
        logits, state, _ = forward(params, config, chunk, state)
        total_nll += loss(logits, tgt) * chunk.size
    return float(np.exp(total_nll / n))


# -- checkpoint persistence ---------------------------------------------------
#
# Layout: magic "MMF1" | u16 version | u32 header length | header JSON
# (config, vocab, epoch, adam scalars, parameter names+shapes) | one block per
# parameter, then the Adam m blocks, then the v blocks — each block u32 ndim,
# u32 dims, little-endian float64 data — | 8-byte checksum (leading bytes of
# the SHA-256 of everything before it).


@dataclass
class Checkpoint:
    config: LmConfig
    vocab: Vocabulary
    params: Params
    adam: AdamState
    epoch: int = 0
    loss_trace: list[float] = field(default_factory=list)


def _pack_block(arr: np.ndarray) -> bytes:
    out = struct.pack("<I", arr.ndim)
    for dim in arr.shape:
        out += struct.pack("<I", dim)
    return out + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    names = sorted(ckpt.params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(ckpt.config),
        "vocab": ckpt.vocab.index_to_token,
        "epoch": ckpt.epoch,
        "loss_trace": ckpt.loss_trace,
        "rng": {"scheme": "derive_seed(seed, 'epoch', epoch)", "seed": ckpt.config.seed},
        "adam": {
            "t": ckpt.adam.t,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps,
        },
        "params": [[name, list(ckpt.params[name].shape)] for name in names],
    }
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<H", CHECKPOINT_VERSION)
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<I", len(encoded))
    blob += encoded
    for group in (ckpt.params, ckpt.adam.m, ckpt.adam.v):
        for name in names:
            blob += _pack_block(group[name])
    blob += hashlib.sha256(bytes(blob)).digest()[:8]
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def block(self, expect_shape: tuple[int, ...], name: str) -> np.ndarray:
        ndim = self.u32()
        shape = tuple(self.u32() for _ in range(ndim))
        if shape != expect_shape:
            raise CheckpointError(
                f"{self.path}: block {name!r} has shape {shape}, header says {expect_shape}"
            )
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(count * 8)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path: str | Path) -> Checkpoint:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {p}: {exc}") from exc
    if len(data) < len(CHECKPOINT_MAGIC) + 2 + 4 + 8:
        raise CheckpointError(f"{p}: file too short to be a checkpoint")
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{p}: bad magic bytes (not a checkpoint file)")
    digest = hashlib.sha256(data[:-8]).digest()[:8]
    if digest != data[-8:]:
        raise CheckpointError(f"{p}: checksum mismatch (corrupt or truncated file)")
    r = _Reader(data[:-8], p)
    r.take(len(CHECKPOINT_MAGIC))
    version = r.u16()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{p}: format version {version} not supported (expected {CHECKPOINT_VERSION})"
        )
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{p}: unreadable header: {exc}") from exc
    try:
        config = LmConfig(**header["config"])
        vocab = Vocabulary(list(header["vocab"]))
        names_shapes = [(n, tuple(s)) for n, s in header["params"]]
        adam_meta = header["adam"]
        epoch = int(header["epoch"])
        loss_trace = [float(x) for x in header.get("loss_trace", [])]
    except (KeyError, TypeError, ValueError, InputError) as exc:
        raise CheckpointError(f"{p}: invalid header contents: {exc}") from exc
    groups = []
    for _ in range(3):
        groups.append({name: r.block(shape, name) for name, shape in names_shapes})
    if r.pos != len(r.data):
        raise CheckpointError(f"{p}: {len(r.data) - r.pos} unexpected trailing bytes")
    params, m, v = groups
    _check_shapes(p, params, config, vocab)
    adam = AdamState(
        m=m,
        v=v,
        t=int(adam_meta["t"]),
        beta1=float(adam_meta["beta1"]),
        beta2=float(adam_meta["beta2"]),
        eps=float(adam_meta["eps"]),
    )
    return Checkpoint(config, vocab, params, adam, epoch, loss_trace)


def _check_shapes(path, params: Params, config: LmConfig, vocab: Vocabulary) -> None:
    expected: dict[str, tuple[int, ...]] = {
        "embedding": (vocab.size, config.embed_dim),
        "proj_W": (config.hidden, vocab.size),
        "proj_b": (vocab.size,),
    }
    for layer in range(config.layers):
        in_dim = config.embed_dim if layer == 0 else config.hidden
        for g in GATES:
            expected[f"l{layer}_W{g}"] = (in_dim, config.hidden)
            expected[f"l{layer}_U{g}"] = (config.hidden, config.hidden)
            expected[f"l{layer}_b{g}"] = (config.hidden,)
    if set(params) != set(expected):
        raise CheckpointError(f"{path}: parameter set does not match the stored config")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(
                f"{path}: {name} has shape {params[name].shape}, "
                f"config/vocab imply {shape}"
            )
