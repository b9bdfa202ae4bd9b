"""Synthetic multi-channel datasets, robust normalization and protocol splits.

Samples are multi-channel feature vectors with a bonafide/attack label,
an attack-type tag, a client identity and a train/dev/eval group. The
generator draws Gaussian clusters per class; protocol splits partition
identities disjointly across folds and optionally withhold an attack
family from training, mirroring known-attack vs unseen-attack regimes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, ParseError, SplitError

BONAFIDE = "bonafide"
ATTACK = "attack"
GROUPS = ("train", "dev", "eval")

# Stream tags so the generator's sampling RNG and the identity-partition
# RNG stay independent for the same seed.
_DRAW_STREAM = 0
_PARTITION_STREAM = 1


@dataclass(frozen=True, eq=False)
class Sample:
    """One multi-channel observation."""

    id: int
    identity: int
    channels: dict[str, np.ndarray]
    label: str
    attack_type: str | None
    group: str

    def __post_init__(self):
        if self.label not in (BONAFIDE, ATTACK):
            raise InputError(f"label must be bonafide or attack, got {self.label!r}")
        if (self.attack_type is not None) != (self.label == ATTACK):
            raise InputError("attack_type must be present iff label is attack")
        if self.group not in GROUPS:
            raise InputError(f"group must be one of {GROUPS}, got {self.group!r}")


@dataclass(frozen=True)
class ClusterSpec:
    """A Gaussian cluster: per-channel mean vectors, isotropic scale, count."""

    name: str
    family: str | None
    mean: dict[str, np.ndarray]
    scale: float
    count: int


@dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic dataset description; ``channels`` maps name -> dimension."""

    channels: dict[str, int]
    bonafide: ClusterSpec
    attacks: tuple[ClusterSpec, ...]
    identity_count: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "attacks", tuple(self.attacks))

    def validate(self) -> None:
        if not self.channels:
            raise ConfigurationError("at least one channel is required")
        if any(d < 1 for d in self.channels.values()):
            raise ConfigurationError("channel dimensions must be >= 1")
        if self.identity_count < 1:
            raise ConfigurationError("identity_count must be >= 1")
        if self.bonafide.family is not None:
            raise ConfigurationError("the bonafide cluster must not carry a family tag")
        for spec in (self.bonafide, *self.attacks):
            if spec.count < 1:
                raise ConfigurationError(f"cluster {spec.name!r} count must be >= 1")
            if spec.scale < 0:
                raise ConfigurationError(f"cluster {spec.name!r} scale must be >= 0")
            for ch, dim in self.channels.items():
                mean = spec.mean.get(ch)
                if mean is None or np.asarray(mean).shape != (dim,):
                    raise ConfigurationError(
                        f"cluster {spec.name!r} needs a {dim}-vector mean for channel {ch!r}"
                    )
        names = [a.name for a in self.attacks]
        if len(set(names)) != len(names):
            raise ConfigurationError("attack type names must be unique")


def _resolve_mean(raw, channels: dict[str, int]) -> dict[str, np.ndarray]:
    mean = {}
    for ch, dim in channels.items():
        value = raw.get(ch, 0.0) if isinstance(raw, dict) else raw
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            arr = np.full(dim, float(arr))
        mean[ch] = arr
    return mean


def generator_config_from_dict(doc: dict) -> GeneratorConfig:
    """Build a GeneratorConfig from a parsed JSON document.

    Cluster means may be scalars (broadcast over the channel) or full
    per-channel vectors; omitted channels default to zero mean.
    """
    try:
        channels = {str(k): int(v) for k, v in doc["channels"].items()}
        bona = doc["bonafide"]
        bonafide = ClusterSpec(
            name=BONAFIDE, family=None,
            mean=_resolve_mean(bona.get("mean", 0.0), channels),
            scale=float(bona.get("scale", 1.0)), count=int(bona["count"]),
        )
        attacks = tuple(
            ClusterSpec(
                name=str(a["name"]), family=str(a["family"]),
                mean=_resolve_mean(a.get("mean", 0.0), channels),
                scale=float(a.get("scale", 1.0)), count=int(a["count"]),
            )
            for a in doc.get("attacks", [])
        )
        cfg = GeneratorConfig(
            channels=channels, bonafide=bonafide, attacks=attacks,
            identity_count=int(doc["identity_count"]), seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad generator config: {exc}") from exc
    cfg.validate()
    return cfg


def _partition_identities(identities: list[int], seed: int) -> dict[int, str]:
    """Deterministically assign identities to train/dev/eval, round-robin."""
    rng = np.random.default_rng([seed, _PARTITION_STREAM])
    order = list(rng.permutation(sorted(identities)))
    return {int(ident): GROUPS[i % 3] for i, ident in enumerate(order)}


def generate_synthetic(cfg: GeneratorConfig) -> list[Sample]:
    """Draw the configured clusters; deterministic for a given seed.

    Identities are assigned round-robin within each class and groups
    follow the identity partition derived from the same seed, so a saved
    dataset carries a usable grandtest-style grouping out of the box.
    """
    cfg.validate()
    rng = np.random.default_rng([cfg.seed, _DRAW_STREAM])
    fold_of = _partition_identities(list(range(cfg.identity_count)), cfg.seed)

    samples: list[Sample] = []
    sample_id = 0
    class_counter = {BONAFIDE: 0, ATTACK: 0}
    for spec in (cfg.bonafide, *cfg.attacks):
        label = BONAFIDE if spec.family is None else ATTACK
        for _ in range(spec.count):
            identity = class_counter[label] % cfg.identity_count
            class_counter[label] += 1
            channels = {
                ch: spec.mean[ch] + spec.scale * rng.standard_normal(dim)
                for ch, dim in cfg.channels.items()
            }
            attack_type = None if label == BONAFIDE else f"{spec.name}@{spec.family}"
            samples.append(Sample(
                id=sample_id, identity=identity, channels=channels,
                label=label, attack_type=attack_type,
                group=fold_of[identity],
            ))
            sample_id += 1
    return samples


def mad_normalize(values: np.ndarray, k: float = 4.0) -> np.ndarray:
    """Robustly map a raw vector into [0, 255] around its median.

    v' = clamp(128 + 128 * (v - median) / (k * MAD), 0, 255) with
    MAD = median(|v - median|). A zero MAD maps everything to 128.
    """
    if k <= 0:
        raise InputError(f"k must be > 0, got {k}")
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InputError("cannot normalize an empty vector")
    med = np.median(v)
    mad = np.median(np.abs(v - med))
    if mad == 0.0:
        return np.full_like(v, 128.0)
    return np.clip(128.0 + 128.0 * (v - med) / (k * mad), 0.0, 255.0)


@dataclass(frozen=True)
class ProtocolSplit:
    """Identity-disjoint train/dev/eval sample-id lists for one protocol."""

    name: str
    train_ids: tuple[int, ...]
    dev_ids: tuple[int, ...]
    eval_ids: tuple[int, ...]

    def fold_ids(self, group: str) -> tuple[int, ...]:
        return {"train": self.train_ids, "dev": self.dev_ids, "eval": self.eval_ids}[group]


_LOO_RE = re.compile(r"^leave_one_out\((.+)\)$")

PROTOCOLS = ("grandtest", "unseen_family_A", "unseen_family_B")
_HELD_OUT_FAMILY = {"unseen_family_A": "2D", "unseen_family_B": "3D"}


def attack_family(attack_type: str) -> str:
    """Family tag of an attack type; types are named ``NAME@FAMILY``.

    The dataset line format has no family column, so the generator bakes
    the family into the attack-type string and it survives save/load.
    """
    if "@" in attack_type:
        return attack_type.rsplit("@", 1)[1]
    return "unknown"


def _matches_type(attack_type: str, wanted: str) -> bool:
    return attack_type == wanted or attack_type.split("@", 1)[0] == wanted


def split_protocol(samples: list[Sample], protocol: str, seed: int) -> ProtocolSplit:
    """Assign samples to identity-disjoint folds under the named protocol.

    grandtest keeps every sample in its identity's fold. The unseen
    protocols drop the held-out family (A -> "2D", B -> "3D") from train
    and dev and restrict eval to bonafide plus that family only.
    ``leave_one_out(TYPE)`` does the same for a single attack type.
    """
    if not samples:
        raise SplitError("cannot split an empty dataset")
    fold_of = _partition_identities(sorted({s.identity for s in samples}), seed)

    held_family: str | None = None
    held_type: str | None = None
    loo = _LOO_RE.match(protocol)
    if loo:
        held_type = loo.group(1)
        if not any(s.label == ATTACK and _matches_type(s.attack_type, held_type)
                   for s in samples):
            raise SplitError(f"attack type {held_type!r} not present in the data")
    elif protocol in _HELD_OUT_FAMILY:
        held_family = _HELD_OUT_FAMILY[protocol]
        families = {attack_family(s.attack_type) for s in samples if s.label == ATTACK}
        if held_family not in families:
            raise SplitError(f"family {held_family!r} not present in the data")
    elif protocol != "grandtest":
        raise SplitError(f"unknown protocol {protocol!r}")

    unseen = held_family is not None or held_type is not None
    folds: dict[str, list[int]] = {g: [] for g in GROUPS}
    for s in samples:
        fold = fold_of[s.identity]
        if s.label == ATTACK and unseen:
            held_out = (
                (held_family is not None and attack_family(s.attack_type) == held_family)
                or (held_type is not None and _matches_type(s.attack_type, held_type))
            )
            if held_out and fold in ("train", "dev"):
                continue
            if not held_out and fold == "eval":
                continue
        folds[fold].append(s.id)
    return ProtocolSplit(
        name=protocol,
        train_ids=tuple(folds["train"]),
        dev_ids=tuple(folds["dev"]),
        eval_ids=tuple(folds["eval"]),
    )


def samples_equal(a: list[Sample], b: list[Sample]) -> bool:
    """Field-by-field equality including exact channel values."""
    if len(a) != len(b):
        return False
    for sa, sb in zip(a, b):
        if (sa.id, sa.identity, sa.label, sa.attack_type, sa.group) != \
                (sb.id, sb.identity, sb.label, sb.attack_type, sb.group):
            return False
        if sa.channels.keys() != sb.channels.keys():
            return False
        for ch in sa.channels:
            if not np.array_equal(sa.channels[ch], sb.channels[ch]):
                return False
    return True


# ---------------------------------------------------------------------------
# Dataset text format (.ocds): UTF-8, LF newlines. A header line declares
# the channel layout, then one sample per line:
#   id,identity,group,label,attack_type,CH:v1|v2|...;CH:v1|...
# with "-" for an absent attack type. An empty file is an empty dataset.
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^#ocds v1 (.+)$")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(samples: list[Sample], path) -> None:
    """Write samples to ``path``; the round trip restores them exactly."""
    if not samples:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("")
        return
    layout = {ch: len(v) for ch, v in samples[0].channels.items()}
    lines = ["#ocds v1 " + ";".join(f"{ch}:{d}" for ch, d in layout.items())]
    for s in samples:
        if {ch: len(v) for ch, v in s.channels.items()} != layout:
            raise InputError(f"sample {s.id} disagrees with the channel layout")
        block = ";".join(
            f"{ch}:" + "|".join(_fmt(x) for x in s.channels[ch]) for ch in layout
        )
        attack = s.attack_type if s.attack_type is not None else "-"
        lines.append(f"{s.id},{s.identity},{s.group},{s.label},{attack},{block}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> list[Sample]:
    """Read a ``.ocds`` file; malformed content raises ParseError with a line number."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.strip() == "":
        return []
    lines = text.split("\n")
    header = _HEADER_RE.match(lines[0])
    if header is None:
        raise ParseError("expected header '#ocds v1 CH:DIM;...'", line=1)
    layout: dict[str, int] = {}
    try:
        for part in header.group(1).split(";"):
            ch, dim = part.split(":")
            layout[ch] = int(dim)
    except ValueError:
        raise ParseError("malformed channel layout in header", line=1)

    samples: list[Sample] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        fields = line.split(",")
        if len(fields) != 6:
            raise ParseError(f"expected 6 comma-separated fields, got {len(fields)}",
                             line=lineno)
        sid, identity, group, label, attack, block = fields
        channels: dict[str, np.ndarray] = {}
        try:
            for chunk in block.split(";"):
                ch, values = chunk.split(":", 1)
                channels[ch] = np.array([float(v) for v in values.split("|")])
        except ValueError:
            raise ParseError("malformed channel block", line=lineno)
        if set(channels) != set(layout):
            raise ParseError(
                f"channels {sorted(channels)} do not match header {sorted(layout)}",
                line=lineno)
        for ch, dim in layout.items():
            if len(channels[ch]) != dim:
                raise ParseError(
                    f"channel {ch!r} has {len(channels[ch])} values, expected {dim}",
                    line=lineno)
        try:
            samples.append(Sample(
                id=int(sid), identity=int(identity), group=group, label=label,
                attack_type=None if attack == "-" else attack, channels=channels,
            ))
        except (ValueError, InputError) as exc:
            raise ParseError(str(exc), line=lineno)
    return samples
