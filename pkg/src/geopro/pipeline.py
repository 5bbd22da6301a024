"""Joint backbone/sequence model: init, losses, training, and design.

A model couples the sequence encoder, the equivariant coordinate stack,
and the sequence decoder.  Flexible coordinates start on spheres chained
outward from the motif anchors; training balances a coordinate loss and
a residue reconstruction loss; design samples flexible residues from
the decoder under a fixed motif.
"""

import dataclasses
import logging
import math
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import ProteinRecord
from .egnn import (
    EgnnModel,
    GraphState,
    egnn_forward,
    init_egnn,
    sequence_separation_attrs,
)
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    GenerationError,
    NumericError,
    ParseError,
)
from .geometry import sample_sphere_point
from .seqmodel import (
    MASK,
    RESIDUE_COUNT,
    ContextEncoder,
    GsdDecoder,
    corrupt_sequence,
    decode_logits,
    encode_context,
    gsd_feature_select,
    init_context_encoder,
    init_gsd_decoder,
    sample_top_k,
    sequence_loss,
)
from . import __version__

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GEOPRO01"
EDGE_ATTR_MODES = ("none", "seqsep")
SEQSEP_WIDTH = 7

PROFILES = {
    "beta-lactamase": {"alpha": 0.1},
    "myoglobin": {"alpha": 0.01},
}


def substream(seed, label):
    """Independent generator derived from a base seed and a purpose label."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), zlib.crc32(label.encode("utf-8"))])
    )


@dataclass
class Motif:
    """The fixed region: positions with their residues and coordinates."""

    positions: np.ndarray
    residues: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.residues = np.asarray(self.residues, dtype=np.int64)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.positions.ndim != 1 or self.positions.shape[0] == 0:
            raise ContractError("motif needs at least one position")
        if np.any(np.diff(self.positions) <= 0):
            raise ContractError("motif positions must be strictly increasing")
        if self.positions[0] < 0:
            raise ContractError("motif positions must be non-negative")
        m = self.positions.shape[0]
        if self.residues.shape != (m,) or self.coords.shape != (m, 3):
            raise ContractError(
                "motif arrays disagree: %d positions, %s residues, %s coords"
                % (m, self.residues.shape, self.coords.shape)
            )
        if self.residues.min() < 0 or self.residues.max() >= RESIDUE_COUNT:
            raise ContractError("motif residues must be amino-acid tokens")

    @property
    def size(self):
        return int(self.positions.shape[0])

    @property
    def span(self):
        return int(self.positions[-1]) + 1

    def position_set(self):
        return set(int(p) for p in self.positions)


def motif_from_record(record, positions):
    """Motif built from a record's residues and coordinates."""
    positions = np.asarray(sorted(set(int(p) for p in positions)), dtype=np.int64)
    if positions.size and positions[-1] >= record.length:
        raise ContractError(
            "motif position %d out of range for length %d"
            % (positions[-1], record.length)
        )
    return Motif(
        positions=positions,
        residues=record.sequence[positions],
        coords=record.ca_coords[positions],
    )


_INT_FIELDS = {
    "batch_size", "warmup_steps", "epochs", "seed", "egnn_depth", "width",
    "top_k", "enc_depth", "dec_depth", "n_heads", "max_len",
}
_FLOAT_FIELDS = {"alpha", "beta", "base_lr", "radius"}
_STR_FIELDS = {"feature_select", "edge_attrs"}
_ARCH_FIELDS = (
    "width", "egnn_depth", "enc_depth", "dec_depth", "n_heads", "max_len",
    "feature_select", "edge_attrs",
)


@dataclass
class TrainingConfig:
    """Every knob of the model and its training run."""

    alpha: float = 0.1
    beta: float = 1.0
    batch_size: int = 4
    base_lr: float = 1e-7
    warmup_steps: int = 4000
    epochs: int = 10
    seed: int = 0
    feature_select: str = "as_printed"
    egnn_depth: int = 2
    width: int = 320
    top_k: int = 3
    enc_depth: int = 2
    dec_depth: int = 2
    n_heads: int = 4
    max_len: int = 512
    radius: float = 3.75
    edge_attrs: str = "none"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.alpha == 0 and self.beta == 0:
            raise ConfigError("at least one loss weight must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.base_lr <= 0:
            raise ConfigError("base_lr must be positive")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be at least 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.feature_select not in ("as_printed", "inverted"):
            raise ConfigError(
                "feature_select must be 'as_printed' or 'inverted', got %r"
                % self.feature_select
            )
        if self.edge_attrs not in EDGE_ATTR_MODES:
            raise ConfigError(
                "edge_attrs must be one of %s, got %r" % (EDGE_ATTR_MODES, self.edge_attrs)
            )
        if self.egnn_depth < 0 or self.width < 1:
            raise ConfigError("egnn_depth must be >= 0 and width >= 1")
        if not 1 <= self.top_k <= RESIDUE_COUNT:
            raise ConfigError("top_k must be in [1, %d]" % RESIDUE_COUNT)
        if self.radius <= 0:
            raise ConfigError("radius must be positive")

    def arch_hash(self):
        """Hash over the fields that determine parameter layout and meaning."""
        canon = ";".join("%s=%s" % (k, getattr(self, k)) for k in _ARCH_FIELDS)
        return zlib.crc32(canon.encode("utf-8"))


def parse_config_text(text):
    """Parse 'key = value' lines; blank lines and '#' comments allowed."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected 'key = value', got %r" % (lineno, raw))
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def build_config(file_text=None, overrides=None, profile=None):
    """Config from defaults, then file values, then explicit overrides."""
    values = {}
    if file_text is not None:
        for key, raw in parse_config_text(file_text).items():
            values[key] = _convert_config_value(key, raw)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(
                "unknown profile %r, expected one of %s" % (profile, sorted(PROFILES))
            )
        for key, val in PROFILES[profile].items():
            values.setdefault(key, val)
    if overrides:
        for key, val in overrides.items():
            if key not in _INT_FIELDS | _FLOAT_FIELDS | _STR_FIELDS:
                raise ConfigError("unknown config key %r" % key)
            values[key] = val
    return TrainingConfig(**values)


def format_config(config):
    """Render a config as `key = value` lines that build_config reparses."""
    lines = []
    for f in dataclasses.fields(config):
        lines.append("%s = %s" % (f.name, getattr(config, f.name)))
    return "\n".join(lines) + "\n"


def _convert_config_value(key, raw):
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
        if key in _STR_FIELDS:
            return raw
    except ValueError:
        raise ConfigError("bad value %r for config key %r" % (raw, key)) from None
    raise ConfigError("unknown config key %r" % key)


@dataclass
class JointModel:
    """Encoder, coordinate stack, and decoder trained together."""

    encoder: ContextEncoder
    egnn: EgnnModel
    decoder: GsdDecoder
    config: TrainingConfig

    def named_parameters(self):
        out = list(self.encoder.named_parameters())
        out += [("egnn.%s" % n, t) for n, t in self.egnn.named_parameters()]
        out += list(self.decoder.named_parameters())
        return out

    @property
    def version(self):
        return "geopro-%s/%08x" % (__version__, self.config.arch_hash())


def build_model(config):
    """Fresh model with weights drawn from the config seed."""
    rng = substream(config.seed, "model-init")
    attr_width = SEQSEP_WIDTH if config.edge_attrs == "seqsep" else 0
    return JointModel(
        encoder=init_context_encoder(
            rng, config.width, depth=config.enc_depth,
            n_heads=config.n_heads, max_len=config.max_len,
        ),
        egnn=init_egnn(
            rng, depth=config.egnn_depth, feat_width=config.width,
            attr_width=attr_width,
        ),
        decoder=init_gsd_decoder(
            rng, config.width, depth=config.dec_depth, n_heads=config.n_heads,
        ),
        config=config,
    )


# ---------------------------------------------------------------------------
# coordinate initialization


def placement_plan(motif_positions, length):
    """Order in which flexible positions chain off the placed set.

    Every flexible position is claimed by its nearest motif anchor in
    sequence distance (ties go to the lower-index anchor) and is placed
    relative to its sequence neighbor one step back toward that anchor,
    wave by wave, so the neighbor is always placed first.
    """
    anchors = sorted(int(p) for p in motif_positions)
    if not anchors:
        raise ContractError("at least one anchor position is required")
    if anchors[0] < 0 or anchors[-1] >= length:
        raise ContractError(
            "anchor positions must lie in [0, %d), got %s" % (length, anchors)
        )
    anchor_set = set(anchors)
    plan = []
    for j in range(length):
        if j in anchor_set:
            continue
        best = min(anchors, key=lambda a: (abs(j - a), a))
        center = j - 1 if best < j else j + 1
        plan.append((abs(j - best), j, center))
    plan.sort()
    return [(j, center) for _, j, center in plan]


def init_backbone_coords(motif, length, radius, rng):
    """Motif coordinates verbatim; flexible positions on chained spheres.

    Each flexible position is dropped onto the sphere of the given
    radius around its already-placed neighbor, at polar and azimuthal
    angles drawn uniformly from [0, pi] and [0, 2*pi].
    """
    if length < motif.span:
        raise ContractError(
            "length %d cannot hold a motif spanning %d" % (length, motif.span)
        )
    coords = np.zeros((length, 3))
    coords[motif.positions] = motif.coords
    for j, center in placement_plan(motif.positions, length):
        omega1 = rng.uniform(0.0, np.pi)
        omega2 = rng.uniform(0.0, 2.0 * np.pi)
        coords[j] = sample_sphere_point(coords[center], radius, omega1, omega2)
    return coords


# ---------------------------------------------------------------------------
# losses


def backbone_loss(predicted, target, motif):
    """Sum of squared coordinate errors over flexible positions only."""
    predicted = ad.as_tensor(predicted)
    target = np.asarray(target.data if isinstance(target, ad.Tensor) else target)
    length = predicted.shape[0]
    if target.shape != (length, 3):
        raise ContractError(
            "target shape %s does not match %d predicted points"
            % (target.shape, length)
        )
    keep = np.ones(length, dtype=bool)
    keep[motif.positions] = False
    scored = np.flatnonzero(keep)
    if scored.size == 0:
        return ad.Tensor(0.0)
    diff = ad.sub(ad.gather_rows(predicted, scored), target[scored])
    return ad.tsum(ad.square(diff))


def total_loss(backbone_term, sequence_term, alpha, beta):
    """Weighted sum of the two training losses."""
    if alpha < 0 or beta < 0:
        raise DomainError("loss weights must be non-negative")
    return ad.add(ad.mul(ad.as_tensor(backbone_term), alpha),
                  ad.mul(ad.as_tensor(sequence_term), beta))


# ---------------------------------------------------------------------------
# forward passes


def forward_with_coords(corrupted_tokens, start_coords, motif_positions, model):
    """Forward pass from already-initialized coordinates.

    Returns (revised coords, revised features, residue logits).  Taking
    the realized starting coordinates as an argument lets callers apply
    group actions to them directly.
    """
    features = encode_context(corrupted_tokens, model.encoder)
    attrs = None
    if model.config.edge_attrs == "seqsep":
        attrs = ad.Tensor(sequence_separation_attrs(len(corrupted_tokens)))
    state = GraphState(ad.as_tensor(start_coords), features, attrs)
    out = egnn_forward(state, model.egnn)
    selected = gsd_feature_select(
        out.feats, motif_positions, model.decoder.mask_emb, model.config.feature_select
    )
    logits = decode_logits(selected, model.decoder)
    return out.coords, out.feats, logits


def forward_joint(record, motif, model, rng):
    """Mask, initialize, and run the full model for one record."""
    if record.length > model.config.max_len:
        raise ContractError(
            "record %r length %d exceeds max_len %d"
            % (record.record_id, record.length, model.config.max_len)
        )
    corrupted = corrupt_sequence(record.sequence, motif.position_set())
    start = init_backbone_coords(motif, record.length, model.config.radius, rng)
    return forward_with_coords(corrupted, start, motif.position_set(), model)


def example_losses(record, motif, model, rng):
    """(backbone, sequence, total) loss tensors for one training example."""
    coords, _, logits = forward_joint(record, motif, model, rng)
    l_b = backbone_loss(coords, record.ca_coords, motif)
    l_s = sequence_loss(logits, record.sequence, motif.position_set())
    return l_b, l_s, total_loss(l_b, l_s, model.config.alpha, model.config.beta)


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochStats:
    epoch: int
    train_total: float
    train_backbone: float
    train_sequence: float
    valid_total: float = math.nan


def _schedule(config, total_steps):
    """Step-to-lr map, shortening warmup when the run is too brief."""
    if total_steps <= 1:
        return lambda step: config.base_lr
    warmup = min(config.warmup_steps, total_steps // 2)
    if warmup != config.warmup_steps:
        log.info(
            "run of %d steps is too short for %d warmup steps; using %d",
            total_steps, config.warmup_steps, warmup,
        )
    return lambda step: ad.lr_at_step(step, warmup, total_steps, config.base_lr)


def example_rng(seed, record):
    """Initialization stream for one example, identical on every visit.

    Keying the stream by record id rather than by visit order makes the
    training objective a fixed function of the weights, so losses from
    different epochs are directly comparable.
    """
    return substream(seed, "init-%s" % record.record_id)


def train(train_set, config, model, valid_set=None, checkpoint_path=None):
    """Optimize the model in place; returns per-epoch loss statistics.

    Each step averages the joint loss over a mini-batch, backpropagates
    once, and applies one optimizer update at the scheduled rate.  When
    a validation set and a checkpoint path are given, the best
    validation loss decides which weights get saved.
    """
    if not train_set:
        raise ContractError("training set is empty")
    params = [t for _, t in model.named_parameters()]
    adam = ad.AdamState(params, base_lr=config.base_lr)
    steps_per_epoch = math.ceil(len(train_set) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    history = []
    if total_steps == 0:
        return history
    lr_of = _schedule(config, total_steps)
    order_rng = substream(config.seed, "train-order")
    step = 0
    best_valid = math.inf
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(train_set))
        sum_b = sum_s = sum_t = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            with ad.Tape() as tape:
                totals = []
                for idx in batch:
                    record, motif = train_set[idx]
                    l_b, l_s, l_total = example_losses(
                        record, motif, model, example_rng(config.seed, record)
                    )
                    value = l_total.item()
                    if not math.isfinite(value):
                        raise NumericError(
                            "non-finite loss at step %d on example %r"
                            % (step, record.record_id)
                        )
                    sum_b += l_b.item()
                    sum_s += l_s.item()
                    sum_t += value
                    totals.append(l_total)
                mean = ad.mul(ad.tsum(ad.concat(
                    [ad.reshape(t, (1,)) for t in totals], axis=0
                )), 1.0 / len(totals))
                tape.backward(mean)
            step += 1
            ad.adam_step(adam, params, lr_of(step))
        n = len(train_set)
        stats = EpochStats(
            epoch=epoch,
            train_total=sum_t / n,
            train_backbone=sum_b / n,
            train_sequence=sum_s / n,
        )
        if valid_set:
            stats.valid_total = evaluate_loss(valid_set, model)
            if checkpoint_path is not None and stats.valid_total < best_valid:
                best_valid = stats.valid_total
                save_checkpoint(checkpoint_path, model)
        history.append(stats)
    return history


def evaluate_loss(dataset, model):
    """Mean joint loss over a dataset, without touching any gradients."""
    if not dataset:
        raise ContractError("cannot evaluate on an empty dataset")
    total = 0.0
    for record, motif in dataset:
        rng = example_rng(model.config.seed, record)
        _, _, l_total = example_losses(record, motif, model, rng)
        total += l_total.item()
    return total / len(dataset)


# ---------------------------------------------------------------------------
# design


@dataclass
class DesignCandidate:
    """One sampled sequence with its predicted coordinates."""

    sequence: np.ndarray
    coords: np.ndarray
    token_probs: np.ndarray
    seed: int
    model_version: str

    def __post_init__(self):
        self.sequence = np.asarray(self.sequence, dtype=np.int64)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.token_probs = np.asarray(self.token_probs, dtype=np.float64)
        n = self.sequence.shape[0]
        if self.coords.shape != (n, 3) or self.token_probs.shape != (n,):
            raise ContractError("candidate arrays disagree in length")


def design(motif, length, n_candidates, k, model, seed, pin_motif=True):
    """Sample candidate designs conditioned on the motif.

    Each candidate gets its own generator seeded ``seed + index``, a
    fresh spherical initialization, one forward pass, and independent
    per-position draws from the renormalized top-k of each flexible
    logit row.  Motif residues are copied verbatim; ``pin_motif`` also
    copies the motif coordinates over the predicted ones.
    """
    if length < motif.span:
        raise ContractError(
            "length %d cannot hold a motif spanning %d" % (length, motif.span)
        )
    tokens = np.full(length, MASK, dtype=np.int64)
    tokens[motif.positions] = motif.residues
    flexible = np.setdiff1d(np.arange(length), motif.positions)
    out = []
    for index in range(n_candidates):
        rng = np.random.default_rng(seed + index)
        start = init_backbone_coords(motif, length, model.config.radius, rng)
        coords, _, logits = forward_with_coords(
            tokens, start, motif.position_set(), model
        )
        row_logits = logits.data
        probs = np.exp(row_logits - row_logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        sequence = tokens.copy()
        for j in flexible:
            sequence[j] = sample_top_k(row_logits[j], k, rng)
        final_coords = coords.data.copy()
        if pin_motif:
            final_coords[motif.positions] = motif.coords
        out.append(
            DesignCandidate(
                sequence=sequence,
                coords=final_coords,
                token_probs=probs[np.arange(length), sequence],
                seed=seed + index,
                model_version=model.version,
            )
        )
    return out


# ---------------------------------------------------------------------------
# synthetic data


def _bend_angles(coords):
    """Interior bend angle at each position, ends copying their neighbor."""
    v = np.diff(coords, axis=0)
    unit = v / np.linalg.norm(v, axis=1, keepdims=True)
    cos = np.sum(unit[:-1] * unit[1:], axis=1)
    inner = np.arccos(np.clip(cos, -1.0, 1.0))
    return np.concatenate([[inner[0]], inner, [inner[-1]]])


def curvature_tokens(coords):
    """Residue tokens derived from bend-angle buckets of the backbone."""
    buckets = np.minimum(
        (_bend_angles(coords) / np.pi * RESIDUE_COUNT).astype(np.int64),
        RESIDUE_COUNT - 1,
    )
    return buckets


def motif_rule_positions(coords, motif_frac):
    """The most strongly bent ceil(motif_frac * L) positions, sorted."""
    length = coords.shape[0]
    count = math.ceil(motif_frac * length)
    angles = _bend_angles(coords)
    order = np.lexsort((np.arange(length), -angles))
    return np.sort(order[:count])


def generate_synthetic_dataset(n, length, motif_frac, seed,
                               clash_distance=3.0, max_restarts=200):
    """Self-avoiding chains whose sequence follows backbone curvature.

    Consecutive points are 3.7 to 3.9 apart; any new point closer than
    ``clash_distance`` to an earlier one restarts the chain.  Residues
    are the curvature buckets of their position, and the motif marks the
    most strongly bent positions, so structure determines sequence.
    """
    if length < 5:
        raise ContractError("length must be at least 5, got %d" % length)
    if not 0.0 < motif_frac < 1.0:
        raise DomainError("motif_frac must be in (0, 1), got %r" % motif_frac)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        coords = _self_avoiding_chain(length, rng, clash_distance, max_restarts)
        record = ProteinRecord(
            record_id="syn%03d" % i,
            sequence=curvature_tokens(coords),
            ca_coords=coords,
        )
        motif = motif_from_record(record, motif_rule_positions(coords, motif_frac))
        out.append((record, motif))
    return out


def _self_avoiding_chain(length, rng, clash_distance, max_restarts):
    for _ in range(max_restarts):
        coords = np.zeros((length, 3))
        direction = _unit(rng.normal(size=3))
        ok = True
        for j in range(1, length):
            placed = False
            for _ in range(40):
                candidate_dir = _unit(direction + 0.8 * rng.normal(size=3))
                step = rng.uniform(3.7, 3.9)
                candidate = coords[j - 1] + step * candidate_dir
                gaps = np.linalg.norm(coords[: max(j - 1, 0)] - candidate, axis=1)
                if gaps.size == 0 or gaps.min() >= clash_distance:
                    coords[j] = candidate
                    direction = candidate_dir
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok:
            return coords
    raise GenerationError(
        "could not build a self-avoiding chain of length %d after %d restarts"
        % (length, max_restarts)
    )


def _unit(v):
    return v / max(np.linalg.norm(v), 1e-12)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model):
    """Write all parameters plus the architecture hash, atomically."""
    named = model.named_parameters()
    blob = [CHECKPOINT_MAGIC, struct.pack("<I", len(named))]
    for name, tensor in named:
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor.data, dtype="<f8")
        blob.append(struct.pack("<H", len(encoded)))
        blob.append(encoded)
        blob.append(struct.pack("<B", arr.ndim))
        blob.append(struct.pack("<%dI" % arr.ndim, *arr.shape))
        blob.append(arr.tobytes())
    blob.append(struct.pack("<I", model.config.arch_hash()))
    tmp = "%s.tmp.%d" % (path, os.getpid())
    with open(tmp, "wb") as handle:
        handle.write(b"".join(blob))
    os.replace(tmp, path)
    log.info("saved checkpoint with %d tensors to %s", len(named), path)


def load_checkpoint(path, model):
    """Load parameters saved for the same architecture into the model."""
    with open(path, "rb") as handle:
        payload = handle.read()
    view = memoryview(payload)
    if bytes(view[:8]) != CHECKPOINT_MAGIC:
        raise ParseError("not a checkpoint file: bad magic bytes")
    offset = 8
    try:
        (count,) = struct.unpack_from("<I", view, offset)
        offset += 4
        loaded = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            name = bytes(view[offset:offset + name_len]).decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", view, offset)
            offset += 1
            dims = struct.unpack_from("<%dI" % rank, view, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(view, dtype="<f8", count=size, offset=offset)
            offset += 8 * size
            loaded[name] = arr.reshape(dims).astype(np.float64)
        (stored_hash,) = struct.unpack_from("<I", view, offset)
        offset += 4
    except (struct.error, ValueError):
        raise ParseError("checkpoint file is truncated") from None
    if offset != len(payload):
        raise ParseError("checkpoint has %d trailing bytes" % (len(payload) - offset))
    if stored_hash != model.config.arch_hash():
        raise ConfigError(
            "checkpoint architecture hash %08x does not match model %08x"
            % (stored_hash, model.config.arch_hash())
        )
    named = dict(model.named_parameters())
    if set(named) != set(loaded):
        missing = sorted(set(named) - set(loaded))
        extra = sorted(set(loaded) - set(named))
        raise ConfigError(
            "checkpoint tensors do not match model: missing %s, unexpected %s"
            % (missing, extra)
        )
    for name, tensor in named.items():
        if loaded[name].shape != tensor.data.shape:
            raise DimensionError(
                "tensor %r has shape %s in checkpoint, model expects %s"
                % (name, loaded[name].shape, tensor.data.shape)
            )
        tensor.data = np.ascontiguousarray(loaded[name])
    return model
